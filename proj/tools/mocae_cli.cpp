// Command-line driver: phantom generation, dataset preparation, training,
// grid search, indexing, querying, evaluation and numeric self-checks.
//
// Usage: mocae <subcommand> [--config FILE] [--<key> <value>]...
// Any configuration key can be overridden on the command line, e.g.
//   mocae train --data slices.mocds --out model.ckpt --train.epochs 10

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mocae/mocae.hpp"

namespace fs = std::filesystem;
using namespace mocae;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

KvMap parse_args(int argc, char** argv, int first) {
  KvMap kv;
  for (int i = first; i < argc; ++i) {
    std::string a = argv[i];
    if (a.rfind("--", 0) != 0)
      throw CliError("expected --key value pairs, got: " + a);
    a = a.substr(2);
    if (i + 1 >= argc) throw CliError("missing value for --" + a);
    const std::string v = argv[++i];
    if (a == "config") {
      std::ifstream f(v);
      if (!f) throw CliError("cannot open config file " + v);
      std::stringstream ss;
      ss << f.rdbuf();
      for (const auto& [k2, v2] : parse_config_text(ss.str()))
        kv.insert_or_assign(k2, v2);  // later --key overrides win below
    } else {
      kv[a] = v;
    }
  }
  return kv;
}

std::string require(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw CliError("missing required option --" + key);
  return it->second;
}

void print_resolved(const KvMap& kv) {
  std::cout << "# resolved configuration\n";
  for (const auto& [k, v] : kv) std::cout << k << " = " << v << "\n";
  std::cout << "# config digest: " << config_digest(kv) << "\n";
}

void write_pgm(const std::string& path, const float* data, std::size_t h,
               std::size_t w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = (static_cast<double>(data[i]) + 1.0) * 0.5 * 255.0;
    f.put(static_cast<char>(std::clamp(v, 0.0, 255.0)));
  }
}

int cmd_phantom_gen(const KvMap& kv) {
  const std::string out = require(kv, "out");
  const PhantomConfig pcfg = phantom_config_from_kv(kv);
  const auto seed =
      static_cast<std::uint64_t>(cfg_detail::get_int(kv, "phantom.seed", 1));
  print_resolved(kv);
  const Dataset ds = phantom_dataset(seed, pcfg);
  write_dataset(out, ds);
  std::size_t tumoural = 0;
  for (const auto& s : ds.samples) tumoural += s.tumour_present;
  std::cout << "cases: " << pcfg.n_cases << "\n"
            << "slices: " << ds.samples.size() << "\n"
            << "tumoural slices: " << tumoural << " ("
            << 100.0 * tumoural / std::max<std::size_t>(ds.samples.size(), 1)
            << "%)\n"
            << "wrote " << out << "\n";
  return 0;
}

int cmd_prepare(const KvMap& kv) {
  const std::string in_dir = require(kv, "in");
  const std::string out = require(kv, "out");
  print_resolved(kv);
  if (!fs::is_directory(in_dir)) throw CliError("not a directory: " + in_dir);

  Dataset ds;
  std::uint32_t next_case = 0;
  std::vector<fs::path> case_dirs;
  for (const auto& e : fs::directory_iterator(in_dir))
    if (e.is_directory()) case_dirs.push_back(e.path());
  std::sort(case_dirs.begin(), case_dirs.end());

  for (const fs::path& dir : case_dirs) {
    auto find_file = [&](std::initializer_list<const char*> suffixes) {
      for (const char* s : suffixes)
        for (const auto& e : fs::directory_iterator(dir)) {
          const std::string name = e.path().filename().string();
          if (name.size() > std::strlen(s) + 4 &&
              name.compare(name.size() - std::strlen(s) - 4, std::strlen(s), s) == 0 &&
              name.compare(name.size() - 4, 4, ".nii") == 0)
            return e.path().string();
        }
      return std::string();
    };
    const std::string t1 = find_file({"_t1"});
    const std::string t1gd = find_file({"_t1gd", "_t1ce"});
    const std::string t2 = find_file({"_t2"});
    const std::string flair = find_file({"_flair"});
    if (t1.empty() || t1gd.empty() || t2.empty() || flair.empty()) {
      std::cerr << "warning: skipping " << dir
                << " (missing one of the four modality files)\n";
      continue;
    }
    const std::string seg = find_file({"_seg"});
    const std::string anat = find_file({"_anat"});

    CaseVolumes cv;
    cv.case_id = next_case++;
    cv.t1 = parse_nifti_file(t1, Modality::T1);
    cv.t1gd = parse_nifti_file(t1gd, Modality::T1Gd);
    cv.t2 = parse_nifti_file(t2, Modality::T2);
    cv.flair = parse_nifti_file(flair, Modality::FLAIR);
    cv.has_seg = !seg.empty();
    if (cv.has_seg) cv.seg = parse_nifti_file(seg, Modality::SEG);
    cv.has_anat = !anat.empty();
    if (cv.has_anat) cv.anat = parse_nifti_file(anat, Modality::ANAT);
    if (!cv.has_anat)
      std::cerr << "warning: " << dir
                << " has no _anat volume; excluded from normal-Dice scoring\n";
    for (auto& s : slice_volume(cv)) ds.samples.push_back(std::move(s));
    std::cout << dir.filename().string() << " -> case " << cv.case_id << "\n";
  }
  if (ds.samples.empty()) std::cerr << "warning: no usable cases found\n";
  write_dataset(out, ds);
  std::cout << "wrote " << ds.samples.size() << " slices to " << out << "\n";
  return 0;
}

template <class S>
int cmd_train_typed(const KvMap& kv) {
  const std::string data = require(kv, "data");
  const std::string out = require(kv, "out");
  print_resolved(kv);
  const Dataset ds = read_dataset(data);
  const ModelConfig mcfg = model_config_from_kv(kv);
  const TrainConfig tcfg = train_config_from_kv(kv);
  const Checkpoint<S> ckpt = train<S>(ds, mcfg, tcfg);
  save_checkpoint(out, ckpt);
  if (auto it = kv.find("history_csv"); it != kv.end()) {
    std::ofstream f(it->second);
    export_history_csv(ckpt.history, f);
  }
  const auto& h = ckpt.history;
  std::cout << "epochs: " << h.size() << "\n"
            << "train L_t: " << h.front().train_lt << " -> " << h.back().train_lt
            << "\nval L_t: " << h.back().val_lt << "\nwrote " << out << "\n";
  return 0;
}

template <class S>
int cmd_grid_search_typed(const KvMap& kv) {
  const std::string data = require(kv, "data");
  print_resolved(kv);
  const Dataset ds = read_dataset(data);
  const ModelConfig mcfg = model_config_from_kv(kv);
  const TrainConfig tcfg = train_config_from_kv(kv);
  const double step = cfg_detail::get_double(kv, "grid_step", 0.1);
  const auto k =
      static_cast<std::size_t>(cfg_detail::get_int(kv, "retrieval.k", 1));
  const GridSearchResult res = gamma_grid_search<S>(ds, mcfg, tcfg, step, k);
  std::cout << "gamma1,gamma2,normal_dice,tumoural_dice,entire_dice\n";
  for (const GridPoint& p : res.table)
    std::cout << p.weights.gamma1 << ',' << p.weights.gamma2 << ','
              << p.normal_dice_mean << ',' << p.tumoural_dice_mean << ','
              << p.entire_dice_mean << "\n";
  std::cout << "best: gamma1=" << res.best.gamma1 << " gamma2=" << res.best.gamma2
            << "\n";
  if (auto it = kv.find("out"); it != kv.end()) {
    std::ofstream f(it->second);
    f << "gamma1,gamma2,normal_dice,tumoural_dice,entire_dice\n";
    for (const GridPoint& p : res.table)
      f << p.weights.gamma1 << ',' << p.weights.gamma2 << ','
        << p.normal_dice_mean << ',' << p.tumoural_dice_mean << ','
        << p.entire_dice_mean << "\n";
  }
  return 0;
}

template <class S>
int cmd_index_typed(const KvMap& kv) {
  const std::string data = require(kv, "data");
  const std::string ckpt_path = require(kv, "checkpoint");
  const std::string out = require(kv, "out");
  print_resolved(kv);
  const Dataset ds = read_dataset(data);
  const Checkpoint<S> ckpt = load_checkpoint<S>(ckpt_path);
  const Index ix = build_index(ckpt, ds);
  save_index(out, ix);
  std::cout << "indexed " << ix.entries.size() << " slices (D=" << ix.dim
            << ") into " << out << "\n";
  return 0;
}

template <class S>
int cmd_query_typed(const KvMap& kv) {
  const std::string index_path = require(kv, "index");
  const std::string ckpt_path = require(kv, "checkpoint");
  const std::string data = require(kv, "data");
  const auto case_id =
      static_cast<std::uint32_t>(cfg_detail::get_int(kv, "query.case", 0));
  const auto z = static_cast<std::uint32_t>(cfg_detail::get_int(kv, "query.z", 0));
  const auto k = static_cast<std::size_t>(cfg_detail::get_int(kv, "retrieval.k", 5));
  const double gate = cfg_detail::get_double(kv, "retrieval.gate_threshold", 0.9);
  const bool excl = cfg_detail::get_bool(kv, "retrieval.exclude_self", false);
  print_resolved(kv);

  const Index ix = load_index(index_path);
  const Checkpoint<S> ckpt = load_checkpoint<S>(ckpt_path);
  const Dataset ds = read_dataset(data);
  const SliceSample* q = nullptr;
  for (const auto& s : ds.samples)
    if (s.case_id == case_id && s.z == z) q = &s;
  if (!q)
    throw CliError("query slice (case " + std::to_string(case_id) + ", z " +
                   std::to_string(z) + ") not found in " + data);

  const RetrievalResult res = query(ix, *q, k, ckpt, gate, excl);
  std::cout << "query probability: " << res.query_probability
            << "  gate_applied: " << (res.gate_applied ? "true" : "false") << "\n";
  std::cout << "rank,case,z,distance,tumour_flag\n";
  for (std::size_t i = 0; i < res.hits.size(); ++i) {
    const IndexEntry& e = ix.entries[res.hits[i].entry];
    std::cout << i + 1 << ',' << e.case_id << ',' << e.z << ','
              << res.hits[i].distance << ',' << (e.tumour_flag ? 1 : 0) << "\n";
  }
  if (res.hits.empty() && res.gate_applied)
    std::cout << "warning: confidence gate left no candidates\n";

  if (auto it = kv.find("dump_dir"); it != kv.end()) {
    fs::create_directories(it->second);
    const char* ch[4] = {"t1", "t1gd", "t2", "flair"};
    const std::size_t H = q->image.dim(1), W = q->image.dim(2);
    for (int m = 0; m < 4; ++m)
      write_pgm(it->second + "/query_" + ch[m] + ".pgm",
                q->image.data.data() + static_cast<std::size_t>(m) * H * W, H, W);
    for (std::size_t i = 0; i < res.hits.size(); ++i) {
      const IndexEntry& e = ix.entries[res.hits[i].entry];
      for (const auto& s : ds.samples)
        if (s.case_id == e.case_id && s.z == e.z)
          for (int m = 0; m < 4; ++m)
            write_pgm(it->second + "/rank" + std::to_string(i + 1) + "_" + ch[m] +
                          ".pgm",
                      s.image.data.data() + static_cast<std::size_t>(m) * H * W, H,
                      W);
    }
  }
  return 0;
}

template <class S>
int cmd_evaluate_typed(const KvMap& kv) {
  const std::string index_path = require(kv, "index");
  const std::string ckpt_path = require(kv, "checkpoint");
  const std::string db_path = require(kv, "db");
  const std::string q_path = require(kv, "queries");
  const auto k = static_cast<std::size_t>(cfg_detail::get_int(kv, "retrieval.k", 1));
  const double gate = cfg_detail::get_double(kv, "retrieval.gate_threshold", 0.9);
  const bool excl = cfg_detail::get_bool(kv, "retrieval.exclude_self", true);
  print_resolved(kv);

  const Index ix = load_index(index_path);
  const Checkpoint<S> ckpt = load_checkpoint<S>(ckpt_path);
  const Dataset db = read_dataset(db_path);
  const Dataset queries = read_dataset(q_path);
  const DiceReport rep = evaluate_protocol(ix, ckpt, db, queries, k, gate, excl);
  const nlohmann::json j = report_to_json(rep, config_digest(kv));
  std::cout << j.dump(2) << "\n";
  if (auto it = kv.find("out_json"); it != kv.end()) {
    std::ofstream f(it->second);
    f << j.dump(2) << "\n";
  }
  if (auto it = kv.find("out_csv"); it != kv.end()) {
    std::ofstream f(it->second);
    report_to_csv(rep, f);
  }
  const auto trials = static_cast<std::size_t>(
      cfg_detail::get_int(kv, "evaluate.baseline_trials", 0));
  if (trials > 0) {
    const auto seed =
        static_cast<std::uint64_t>(cfg_detail::get_int(kv, "evaluate.seed", 1));
    const DiceReport base = random_baseline(ix, db, queries, seed, trials);
    std::cout << "random baseline:\n"
              << report_to_json(base, config_digest(kv)).dump(2) << "\n";
  }
  return 0;
}

// Finite-difference suite over every differentiable primitive plus the full
// composite objective, at 64-bit precision.
int cmd_gradcheck(const KvMap& kv) {
  print_resolved(kv);
  const double tol = cfg_detail::get_double(kv, "gradcheck.tolerance", 1e-4);
  const int points = static_cast<int>(cfg_detail::get_int(kv, "gradcheck.points", 10));
  Rng rng(static_cast<std::uint64_t>(cfg_detail::get_int(kv, "gradcheck.seed", 1)));
  bool ok = true;

  auto report = [&](const std::string& name, double err, bool finite) {
    const bool pass = finite && err < tol;
    ok = ok && pass;
    std::printf("%-34s %s  max_rel_err=%.3e\n", name.c_str(),
                pass ? "PASS" : "FAIL", err);
  };

  auto rnd = [&](std::vector<std::size_t> sh) {
    Tensor<double> t(std::move(sh));
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
  };

  for (int pt = 0; pt < points; ++pt) {
    // conv2d
    {
      Tensor<double> ker = rnd({4, 3, 3, 3});
      auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
        Graph<double> g;
        int p = g.leaf(x, true);
        int out = op::mean_all(g, op::conv2d(g, p, g.leaf(ker), 2, 1));
        if (grad) {
          g.backward(out);
          *grad = g.grad(p);
        }
        return g.val(out).data[0];
      };
      auto r = finite_difference_check(f, rnd({2, 3, 8, 8}), 1e-4);
      report("conv2d/input[" + std::to_string(pt) + "]", r.max_rel_err, r.finite);
    }
    // full objective on a small model, wrt one randomly chosen parameter
    {
      ModelConfig mc;
      mc.input_h = mc.input_w = 16;
      mc.widths = {4, 8};
      mc.blocks_per_stage = 1;
      mc.latent_dim = 8;
      mc.classifier_hidden = 4;
      mc.dropout = 0.0;
      mc.seed = 100 + static_cast<std::uint64_t>(pt);
      auto ckpt = build_model<double>(mc);
      Model<double> model(mc);
      Tensor<double> batch = rnd({2, 4, 16, 16});
      std::vector<double> labels = {1, 0};
      std::vector<std::string> names;
      for (const auto& [n, p] : ckpt.params)
        if (p.trainable) names.push_back(n);
      const std::string pname =
          names[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(names.size()) - 1))];
      auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
        auto params = ckpt.params;
        params.at(pname).value = x;
        Graph<double> g;
        nn::FwdCtx<double> c{g, params, Mode::Train, nullptr};
        int xid = g.leaf(batch);
        int z = model.encode_g(c, xid);
        int xhat = model.decode_g(c, z);
        int logit = model.classify_logit_g(c, z);
        int lr = op::mse_loss(g, xhat, xid);
        int lc = op::bce_with_logits(g, logit, labels);
        int lt = op::axpby(g, 0.2, lr, 0.8, lc);
        if (grad) {
          g.backward(lt);
          *grad = g.grad(c.ids.at(pname));
        }
        return g.val(lt).data[0];
      };
      auto r = finite_difference_check_multi(f, ckpt.params.at(pname).value,
                                             {1e-4, 2e-5, 4e-6});
      report("objective/" + pname + "[" + std::to_string(pt) + "]", r.max_rel_err,
             r.finite);
    }
  }
  std::cout << (ok ? "gradcheck: all checks passed\n"
                   : "gradcheck: FAILURES detected\n");
  return ok ? 0 : 1;
}

int usage() {
  std::cerr << "usage: mocae <subcommand> [--config FILE] [--key value]...\n"
               "subcommands:\n"
               "  phantom-gen  --out PATH [--phantom.* ...]\n"
               "  prepare      --in DIR --out PATH\n"
               "  train        --data PATH --out PATH [--model.* --train.* ...]\n"
               "  grid-search  --data PATH [--grid_step 0.1] [--out CSV]\n"
               "  index        --data PATH --checkpoint PATH --out PATH\n"
               "  query        --index PATH --checkpoint PATH --data PATH\n"
               "               --query.case N --query.z N [--retrieval.k 5]\n"
               "  evaluate     --index PATH --checkpoint PATH --db PATH --queries PATH\n"
               "  gradcheck    [--gradcheck.points 10]\n";
  return 2;
}

template <class Fn32, class Fn64>
int dispatch_precision(const KvMap& kv, Fn32 f32, Fn64 f64) {
  const std::string p = cfg_detail::get(kv, "precision", "f32");
  if (p == "f32") return f32(kv);
  if (p == "f64") return f64(kv);
  throw CliError("precision must be f32 or f64, got " + p);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  const std::string cmd = argv[1];
  try {
    const KvMap kv = parse_args(argc, argv, 2);
    if (cmd == "phantom-gen") return cmd_phantom_gen(kv);
    if (cmd == "prepare") return cmd_prepare(kv);
    if (cmd == "train")
      return dispatch_precision(kv, cmd_train_typed<float>, cmd_train_typed<double>);
    if (cmd == "grid-search")
      return dispatch_precision(kv, cmd_grid_search_typed<float>,
                                cmd_grid_search_typed<double>);
    if (cmd == "index")
      return dispatch_precision(kv, cmd_index_typed<float>, cmd_index_typed<double>);
    if (cmd == "query")
      return dispatch_precision(kv, cmd_query_typed<float>, cmd_query_typed<double>);
    if (cmd == "evaluate")
      return dispatch_precision(kv, cmd_evaluate_typed<float>,
                                cmd_evaluate_typed<double>);
    if (cmd == "gradcheck") return cmd_gradcheck(kv);
    std::cerr << "unknown subcommand: " << cmd << "\n";
    return usage();
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
