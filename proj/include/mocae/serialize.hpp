#pragma once
// Versioned binary checkpoint container: magic, format version, the
// configuration as a length-prefixed text block, then per-tensor records
// (name, dtype tag, rank, extents, raw little-endian values). Round-trips
// are bit-exact.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>

#include "mocae/config.hpp"
#include "mocae/model.hpp"

namespace mocae {

inline constexpr char kCheckpointMagic[6] = {'M', 'O', 'C', 'A', 'E', '\0'};

namespace ser_detail {

template <class S>
constexpr std::uint8_t dtype_tag() {
  if constexpr (std::is_same_v<S, float>)
    return 1;
  else
    return 2;
}

inline bool derived_non_trainable(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::size_t n = std::strlen(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return ends_with(".running_mean") || ends_with(".running_var") ||
         ends_with(".stats_init");
}

template <class S>
void put_tensor(std::string& b, const std::string& name, const Tensor<S>& t) {
  detail::put_u32(b, static_cast<std::uint32_t>(name.size()));
  b.append(name);
  b.push_back(static_cast<char>(dtype_tag<S>()));
  b.push_back(static_cast<char>(t.rank()));
  for (std::size_t e : t.shape) detail::put_u64(b, e);
  detail::put_u64(b, t.numel());
  b.append(reinterpret_cast<const char*>(t.data.data()), t.numel() * sizeof(S));
}

template <class S>
std::pair<std::string, Tensor<S>> get_tensor(detail::ByteReader& r) {
  const auto nlen = r.get<std::uint32_t>("tensor name length");
  std::string name(nlen, '\0');
  r.bytes(name.data(), nlen, "tensor name");
  const auto tag = r.get<std::uint8_t>("dtype tag");
  if (tag != dtype_tag<S>())
    throw FormatError("checkpoint: tensor " + name + " has dtype tag " +
                      std::to_string(tag) + " but this build expects " +
                      std::to_string(dtype_tag<S>()));
  const auto rank = r.get<std::uint8_t>("rank");
  Tensor<S> t;
  t.shape.resize(rank);
  std::size_t n = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    t.shape[i] = r.get<std::uint64_t>("extent");
    n *= t.shape[i];
  }
  const auto count = r.get<std::uint64_t>("value count");
  if (count != n)
    throw FormatError("checkpoint: tensor " + name + " claims " +
                      std::to_string(count) + " values but extents imply " +
                      std::to_string(n));
  t.data.resize(n);
  r.bytes(t.data.data(), n * sizeof(S), "tensor values");
  return {std::move(name), std::move(t)};
}

}  // namespace ser_detail

template <class S>
std::string serialize_checkpoint(const Checkpoint<S>& ckpt) {
  std::string b;
  b.append(kCheckpointMagic, 6);
  detail::put_u32(b, Checkpoint<S>::kFormatVersion);

  KvMap kv;
  model_config_to_kv(ckpt.config, kv);
  train_config_to_kv(ckpt.train_config, kv);
  kv["opt.t"] = std::to_string(ckpt.opt.t);
  for (const HistoryRow& h : ckpt.history) {
    std::ostringstream os;
    os.precision(17);
    os << h.train_lr << ',' << h.train_lc << ',' << h.train_lt << ','
       << h.val_lr << ',' << h.val_lc << ',' << h.val_lt;
    kv["history." + std::to_string(h.epoch)] = os.str();
  }
  const std::string cfg_text = config_to_text(kv);
  detail::put_u64(b, cfg_text.size());
  b.append(cfg_text);

  std::uint64_t count = ckpt.params.size() + ckpt.opt.m.size() + ckpt.opt.v.size();
  detail::put_u64(b, count);
  for (const auto& [name, p] : ckpt.params)
    ser_detail::put_tensor(b, name, p.value);
  for (const auto& [name, t] : ckpt.opt.m)
    ser_detail::put_tensor(b, "opt.m/" + name, t);
  for (const auto& [name, t] : ckpt.opt.v)
    ser_detail::put_tensor(b, "opt.v/" + name, t);
  return b;
}

template <class S>
Checkpoint<S> deserialize_checkpoint(const std::uint8_t* p, std::size_t n) {
  detail::ByteReader r{p, n};
  char magic[6];
  r.bytes(magic, 6, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 6) != 0)
    throw FormatError("checkpoint: bad magic bytes");
  const auto version = r.get<std::uint32_t>("format version");
  if (version != Checkpoint<S>::kFormatVersion)
    throw FormatError("checkpoint: version " + std::to_string(version) +
                      " but this reader supports version " +
                      std::to_string(Checkpoint<S>::kFormatVersion));
  const auto cfg_len = r.get<std::uint64_t>("config length");
  std::string cfg_text(cfg_len, '\0');
  r.bytes(cfg_text.data(), cfg_len, "config text");
  const KvMap kv = parse_config_text(cfg_text);

  Checkpoint<S> ckpt;
  ckpt.config = model_config_from_kv(kv);
  ckpt.train_config = train_config_from_kv(kv);
  ckpt.opt.t = cfg_detail::get_int(kv, "opt.t", 0);
  for (const auto& [k, v] : kv) {
    if (k.rfind("history.", 0) != 0) continue;
    HistoryRow h;
    h.epoch = std::stoi(k.substr(8));
    std::istringstream is(v);
    char comma;
    is >> h.train_lr >> comma >> h.train_lc >> comma >> h.train_lt >> comma >>
        h.val_lr >> comma >> h.val_lc >> comma >> h.val_lt;
    if (!is) throw FormatError("checkpoint: malformed history row " + k);
    ckpt.history.push_back(h);
  }
  std::sort(ckpt.history.begin(), ckpt.history.end(),
            [](const HistoryRow& a, const HistoryRow& b) { return a.epoch < b.epoch; });

  const auto count = r.get<std::uint64_t>("tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, t] = ser_detail::get_tensor<S>(r);
    if (name.rfind("opt.m/", 0) == 0)
      ckpt.opt.m[name.substr(6)] = std::move(t);
    else if (name.rfind("opt.v/", 0) == 0)
      ckpt.opt.v[name.substr(6)] = std::move(t);
    else
      ckpt.params[name] = {std::move(t), !ser_detail::derived_non_trainable(name)};
  }
  return ckpt;
}

template <class S>
void save_checkpoint(const std::string& path, const Checkpoint<S>& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  const std::string b = serialize_checkpoint(ckpt);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw FormatError("write failed: " + path);
}

template <class S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  const auto b = read_file_bytes(path);
  return deserialize_checkpoint<S>(b.data(), b.size());
}

}  // namespace mocae
