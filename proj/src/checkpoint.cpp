#include "toad/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <map>

#include "bytes.hpp"

namespace toad {
namespace {

constexpr std::string_view kMagic = "TOADCKPT";

Tensor<float> scalar(double v) { return Tensor<float>(Shape{}, std::vector<float>{static_cast<float>(v)}); }

// Doubles travel as their 8 bytes, one exactly representable f32 per byte.
Tensor<float> exact_double(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  Tensor<float> t({8});
  for (int i = 0; i < 8; ++i) t[i] = static_cast<float>((bits >> (8 * i)) & 0xff);
  return t;
}

double read_double(const Tensor<float>& t, const std::string& name) {
  if (t.size() != 8) throw ParseError(ParseError::Kind::kDimension, 0, "checkpoint: " + name + " is not an encoded double");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    const float b = t[i];
    if (!(b >= 0.0f && b <= 255.0f) || b != static_cast<float>(static_cast<int>(b))) {
      throw ParseError(ParseError::Kind::kRange, 0, "checkpoint: " + name + " has a bad byte");
    }
    bits |= static_cast<std::uint64_t>(b) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

std::size_t as_size(const Tensor<float>& t, const std::string& name) {
  if (t.size() != 1) throw ParseError(ParseError::Kind::kDimension, 0, "checkpoint: " + name + " is not a scalar");
  const float v = t[0];
  if (!(v >= 0.0f) || v != static_cast<float>(static_cast<std::size_t>(v))) {
    throw ParseError(ParseError::Kind::kRange, 0, "checkpoint: " + name + " is not a count");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string encode_records(const std::vector<CheckpointRecord>& records) {
  detail::ByteWriter w;
  w.magic(kMagic);
  w.u32(kFormatVersion);
  w.u32(detail::checked_u32(records.size(), "record count"));
  for (const auto& r : records) {
    w.u32(detail::checked_u32(r.name.size(), "record name"));
    w.magic(r.name);
    // A default-constructed (empty) tensor is stored as rank 1 with extent 0.
    const Shape shape = r.value.empty() ? Shape{0} : r.value.shape();
    w.u32(detail::checked_u32(shape.size(), "rank"));
    for (auto e : shape) w.u32(detail::checked_u32(e, "extent"));
    for (float v : r.value.data()) w.f32(v);
  }
  return w.take();
}

std::vector<CheckpointRecord> decode_records(std::string_view bytes) {
  detail::ByteReader r(bytes);
  r.magic(kMagic, "checkpoint");
  r.version("checkpoint");
  const std::uint32_t count = r.u32("checkpoint header");
  std::vector<CheckpointRecord> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    const std::uint32_t len = r.u32("record name length");
    r.need(len, "record name");
    for (std::uint32_t k = 0; k < len; ++k) rec.name.push_back(static_cast<char>(r.u8("record name")));
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("record rank");
    if (rank > 8) {
      throw ParseError(ParseError::Kind::kDimension, rank_at,
                       "checkpoint: record '" + rec.name + "' has rank " + std::to_string(rank));
    }
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u32("record extents"));
    const std::size_t n = shape_size(shape);
    r.need(n * 4, "record payload");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32("record payload");
    rec.value = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(rec));
  }
  r.finish("checkpoint");
  return out;
}

std::vector<CheckpointRecord> checkpoint_records(const Checkpoint& ckpt) {
  const auto& cfg = ckpt.model.config;
  const auto& p = ckpt.model.params;
  std::vector<CheckpointRecord> out;
  out.push_back({"meta.dim", scalar(cfg.dim)});
  out.push_back({"meta.window", scalar(cfg.window)});
  out.push_back({"meta.layers", scalar(cfg.layers)});
  out.push_back({"meta.heads", scalar(cfg.heads)});
  out.push_back({"meta.classes", scalar(cfg.classes)});
  out.push_back({"meta.mlp_ratio", scalar(cfg.mlp_ratio)});
  out.push_back({"meta.lambda", exact_double(cfg.lambda)});
  out.push_back({"meta.future_enabled", scalar(cfg.future_enabled ? 1 : 0)});
  out.push_back({"meta.classifier_mode", scalar(static_cast<int>(cfg.classifier_mode))});
  out.push_back({"meta.layer_norm_eps", exact_double(cfg.layer_norm_eps)});
  out.push_back({"meta.tau", exact_double(cfg.tau)});
  out.push_back({"meta.epoch", scalar(ckpt.epoch)});
  p.for_each_trainable([&](const std::string& name, const Tensor<float>& t) { out.push_back({name, t}); });
  out.push_back({"classifier.current", p.classifier.current});
  out.push_back({"classifier.future", p.classifier.future});
  out.push_back({"tau", Tensor<float>(Shape{}, std::vector<float>{p.tau})});
  if (ckpt.optim) {
    const auto& s = *ckpt.optim;
    // u64 step split into two exactly representable halves.
    out.push_back({"optim.step_hi", scalar(static_cast<double>(s.step >> 20))});
    out.push_back({"optim.step_lo", scalar(static_cast<double>(s.step & 0xfffff))});
    std::size_t i = 0;
    p.for_each_trainable([&](const std::string& name, const Tensor<float>&) {
      out.push_back({"optim.m." + name, s.first_moment.at(i)});
      out.push_back({"optim.v." + name, s.second_moment.at(i)});
      ++i;
    });
  }
  return out;
}

Checkpoint checkpoint_from_records(const std::vector<CheckpointRecord>& records) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r.value).second) {
      throw ParseError(ParseError::Kind::kDimension, 0, "checkpoint: duplicate record '" + r.name + "'");
    }
  }
  auto get = [&](const std::string& name) -> const Tensor<float>& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError(ParseError::Kind::kTruncated, 0, "checkpoint: missing record '" + name + "'");
    return *it->second;
  };
  Checkpoint ck;
  auto& cfg = ck.model.config;
  cfg.dim = as_size(get("meta.dim"), "meta.dim");
  cfg.window = as_size(get("meta.window"), "meta.window");
  cfg.layers = as_size(get("meta.layers"), "meta.layers");
  cfg.heads = as_size(get("meta.heads"), "meta.heads");
  cfg.classes = as_size(get("meta.classes"), "meta.classes");
  cfg.mlp_ratio = as_size(get("meta.mlp_ratio"), "meta.mlp_ratio");
  cfg.lambda = read_double(get("meta.lambda"), "meta.lambda");
  cfg.future_enabled = as_size(get("meta.future_enabled"), "meta.future_enabled") != 0;
  const std::size_t mode = as_size(get("meta.classifier_mode"), "meta.classifier_mode");
  if (mode > 2) throw ParseError(ParseError::Kind::kRange, 0, "checkpoint: bad classifier mode");
  cfg.classifier_mode = static_cast<ClassifierMode>(mode);
  cfg.layer_norm_eps = read_double(get("meta.layer_norm_eps"), "meta.layer_norm_eps");
  cfg.tau = read_double(get("meta.tau"), "meta.tau");
  ck.epoch = static_cast<std::uint32_t>(as_size(get("meta.epoch"), "meta.epoch"));
  cfg.extra_windows.clear();
  for (const auto& r : records) {
    if (r.name.rfind("pos.T", 0) == 0) cfg.extra_windows.push_back(std::stoul(r.name.substr(5)));
  }
  auto& p = ck.model.params;
  p.tau = get("tau")[0];
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(ParseError::Kind::kRange, 0, std::string("checkpoint: ") + e.what());
  }
  p.classifier.current = get("classifier.current");
  p.classifier.future = get("classifier.future");
  // Shapes come from a seeded init of the stored architecture; values are overwritten.
  auto shaped = init_params(cfg, p.classifier, 0);
  shaped.tau = p.tau;
  shaped.for_each_trainable([&](const std::string& name, Tensor<float>& t) {
    const auto& src = get(name);
    if (src.shape() != t.shape()) {
      throw ParseError(ParseError::Kind::kDimension, 0,
                       "checkpoint: '" + name + "' has shape " + shape_string(src.shape()) +
                           ", architecture expects " + shape_string(t.shape()));
    }
    t = src;
  });
  p = std::move(shaped);
  if (by_name.count("optim.step_hi")) {
    OptimState<float> s;
    s.step = (static_cast<std::uint64_t>(as_size(get("optim.step_hi"), "optim.step_hi")) << 20) |
             as_size(get("optim.step_lo"), "optim.step_lo");
    p.for_each_trainable([&](const std::string& name, const Tensor<float>& t) {
      const auto& m = get("optim.m." + name);
      const auto& v = get("optim.v." + name);
      if (m.shape() != t.shape() || v.shape() != t.shape()) {
        throw ParseError(ParseError::Kind::kDimension, 0, "checkpoint: moment shape mismatch for " + name);
      }
      s.first_moment.push_back(m);
      s.second_moment.push_back(v);
    });
    ck.optim = std::move(s);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_records(checkpoint_records(ckpt)));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_records(decode_records(read_file(path)));
}

std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& dir,
                                            std::string_view stem, std::uint32_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ".epoch%03u.ckpt", epoch);
  return dir / (std::string(stem) + buf);
}

void prune_checkpoints(const std::filesystem::path& dir, std::string_view stem, std::size_t keep) {
  if (keep == 0 || !std::filesystem::is_directory(dir)) return;
  const std::string prefix = std::string(stem) + ".epoch";
  std::vector<std::filesystem::path> found;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && e.path().extension() == ".ckpt") found.push_back(e.path());
  }
  std::sort(found.begin(), found.end());
  if (found.size() <= keep) return;
  for (std::size_t i = 0; i + keep < found.size(); ++i) std::filesystem::remove(found[i]);
}

}  // namespace toad
