#include "sanet/io.hpp"

#include <cstring>
#include <set>
#include <type_traits>

#include "sanet/image.hpp"

namespace sanet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads known keys out of one JSON object and rejects everything else.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? "configuration" : path_) + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const std::string where = path(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(where + " must be true or false");
      out = it->get<bool>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError(where + " must be a non-negative integer");
      out = it->get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(where + " must be a number");
      out = it->get<T>();
    } else if constexpr (std::is_same_v<T, Activation>) {
      if (!it->is_string()) throw ConfigError(where + " must be an activation name");
      try {
        out = activation_from_string(it->get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
      }
    } else if constexpr (std::is_same_v<T, Connectivity>) {
      const std::string s = it->is_number_unsigned() ? std::to_string(it->get<unsigned>())
                                                     : it->is_string() ? it->get<std::string>() : "";
      try {
        out = connectivity_from_string(s);
      } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
      }
    } else {
      try {
        out = it->get<T>();
      } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown configuration key '" + path(k) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

SanetConfig read_network(const json& j, const std::string& path) {
  SanetConfig c = SanetConfig::tiny();
  if (j.is_object() && j.contains("preset")) {
    const auto& p = j["preset"];
    if (p == "standard") {
      c = SanetConfig::standard();
    } else if (p != "tiny") {
      throw ConfigError(path + ".preset must be \"tiny\" or \"standard\"");
    }
  }
  Fields f(j, path);
  f.child("preset");
  f.get("input_size", c.input_size);
  if (const json* stages = f.child("stages")) {
    if (!stages->is_array()) throw ConfigError(f.path("stages") + " must be an array");
    c.stages.clear();
    for (std::size_t i = 0; i < stages->size(); ++i) {
      StageConfig s;
      Fields sf((*stages)[i], f.path("stages") + "[" + std::to_string(i) + "]");
      sf.get("kernel", s.kernel);
      sf.get("stride", s.stride);
      sf.get("pad", s.pad);
      sf.get("channels", s.channels);
      sf.get("pool_window", s.pool_window);
      sf.get("pool_stride", s.pool_stride);
      sf.get("fuse", s.fuse);
      sf.get("rnn_hidden", s.rnn_hidden);
      sf.finish();
      c.stages.push_back(s);
    }
  }
  if (const json* widths = f.child("fc_widths")) {
    if (!widths->is_array()) throw ConfigError(f.path("fc_widths") + " must be an array");
    c.fc_widths.clear();
    for (const auto& w : *widths) {
      if (!w.is_number_unsigned()) throw ConfigError(f.path("fc_widths") + " entries must be positive integers");
      c.fc_widths.push_back(w.get<std::size_t>());
    }
  }
  f.get("num_domains", c.num_domains);
  f.get("conv_activation", c.conv_activation);
  f.get("fc_activation", c.fc_activation);
  f.get("rnn_hidden_activation", c.rnn_hidden_activation);
  f.get("rnn_output_activation", c.rnn_output_activation);
  f.get("connectivity", c.connectivity);
  if (const json* mean = f.child("input_mean")) {
    if (!mean->is_array() || mean->size() != 3) throw ConfigError(f.path("input_mean") + " must hold 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*mean)[i].is_number()) throw ConfigError(f.path("input_mean") + " must hold 3 numbers");
      c.input_mean[i] = (*mean)[i].get<double>();
    }
  }
  f.get("input_scale", c.input_scale);
  f.get("lr_cnn", c.lr_cnn);
  f.get("lr_rnn", c.lr_rnn);
  f.get("lr_fc", c.lr_fc);
  f.get("rnn_lr_decay", c.rnn_lr_decay);
  f.get("momentum", c.momentum);
  f.get("weight_decay", c.weight_decay);
  f.get("batch_positives", c.batch_positives);
  f.get("batch_negative_pool", c.batch_negative_pool);
  f.get("batch_negatives", c.batch_negatives);
  f.get("epoch_iterations", c.epoch_iterations);
  f.finish();
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

}  // namespace

SanetConfig network_config_from_json(const json& j) { return read_network(j, "network"); }

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields top(j, "");
  if (const json* n = top.child("network")) c.network = read_network(*n, "network");
  if (const json* t = top.child("tracker")) {
    Fields tf(*t, "tracker");
    if (const json* p = tf.child("particles")) {
      Fields f(*p, "tracker.particles");
      f.get("count", c.tracker.particles.count);
      f.get("translation_std", c.tracker.particles.translation_std);
      f.get("scale_std", c.tracker.particles.scale_std);
      f.get("scale_base", c.tracker.particles.scale_base);
      f.finish();
    }
    if (const json* u = tf.child("update")) {
      auto& v = c.tracker.update;
      Fields f(*u, "tracker.update");
      f.get("theta", v.theta);
      f.get("short_horizon", v.short_horizon);
      f.get("long_horizon", v.long_horizon);
      f.get("long_period", v.long_period);
      f.get("positive_iou", v.positive_iou);
      f.get("negative_iou", v.negative_iou);
      f.get("init_positives", v.init_positives);
      f.get("init_negatives", v.init_negatives);
      f.get("init_iterations", v.init_iterations);
      f.get("frame_positives", v.frame_positives);
      f.get("frame_negatives", v.frame_negatives);
      f.get("update_iterations", v.update_iterations);
      f.get("batch_positives", v.batch_positives);
      f.get("batch_negative_pool", v.batch_negative_pool);
      f.get("batch_negatives", v.batch_negatives);
      f.get("learning_rate_scale", v.learning_rate_scale);
      f.finish();
    }
    if (const json* r = tf.child("regression")) {
      Fields f(*r, "tracker.regression");
      f.get("enabled", c.tracker.regression.enabled);
      f.get("samples", c.tracker.regression.samples);
      f.get("min_iou", c.tracker.regression.min_iou);
      f.get("lambda", c.tracker.regression.lambda);
      f.finish();
    }
    tf.finish();
  }
  if (const json* t = top.child("training")) {
    Fields f(*t, "training");
    f.get("iterations", c.training.iterations);
    f.get("domains", c.training.domains);
    f.get("sequence_length", c.training.sequence_length);
    f.get("positives_per_frame", c.training.positives_per_frame);
    f.get("negatives_per_frame", c.training.negatives_per_frame);
    f.get("frame_stride", c.training.frame_stride);
    f.get("stop_on_convergence", c.training.stop_on_convergence);
    f.finish();
  }
  top.get("synth_length", c.synth_length);
  top.finish();
  return c;
}

ordered_json to_json(const SanetConfig& c) {
  ordered_json j;
  j["input_size"] = c.input_size;
  auto& stages = j["stages"] = ordered_json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"kernel", s.kernel},
                      {"stride", s.stride},
                      {"pad", s.pad},
                      {"channels", s.channels},
                      {"pool_window", s.pool_window},
                      {"pool_stride", s.pool_stride},
                      {"fuse", s.fuse},
                      {"rnn_hidden", s.rnn_hidden}});
  }
  j["fc_widths"] = c.fc_widths;
  j["num_domains"] = c.num_domains;
  j["conv_activation"] = to_string(c.conv_activation);
  j["fc_activation"] = to_string(c.fc_activation);
  j["rnn_hidden_activation"] = to_string(c.rnn_hidden_activation);
  j["rnn_output_activation"] = to_string(c.rnn_output_activation);
  j["connectivity"] = to_string(c.connectivity);
  j["input_mean"] = c.input_mean;
  j["input_scale"] = c.input_scale;
  j["lr_cnn"] = c.lr_cnn;
  j["lr_rnn"] = c.lr_rnn;
  j["lr_fc"] = c.lr_fc;
  j["rnn_lr_decay"] = c.rnn_lr_decay;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["batch_positives"] = c.batch_positives;
  j["batch_negative_pool"] = c.batch_negative_pool;
  j["batch_negatives"] = c.batch_negatives;
  j["epoch_iterations"] = c.epoch_iterations;
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["network"] = to_json(c.network);
  const auto& p = c.tracker.particles;
  const auto& u = c.tracker.update;
  const auto& r = c.tracker.regression;
  j["tracker"] = {
      {"particles",
       {{"count", p.count}, {"translation_std", p.translation_std}, {"scale_std", p.scale_std}, {"scale_base", p.scale_base}}},
      {"update",
       {{"theta", u.theta},
        {"short_horizon", u.short_horizon},
        {"long_horizon", u.long_horizon},
        {"long_period", u.long_period},
        {"positive_iou", u.positive_iou},
        {"negative_iou", u.negative_iou},
        {"init_positives", u.init_positives},
        {"init_negatives", u.init_negatives},
        {"init_iterations", u.init_iterations},
        {"frame_positives", u.frame_positives},
        {"frame_negatives", u.frame_negatives},
        {"update_iterations", u.update_iterations},
        {"batch_positives", u.batch_positives},
        {"batch_negative_pool", u.batch_negative_pool},
        {"batch_negatives", u.batch_negatives},
        {"learning_rate_scale", u.learning_rate_scale}}},
      {"regression", {{"enabled", r.enabled}, {"samples", r.samples}, {"min_iou", r.min_iou}, {"lambda", r.lambda}}}};
  const auto& t = c.training;
  j["training"] = {{"iterations", t.iterations},
                   {"domains", t.domains},
                   {"sequence_length", t.sequence_length},
                   {"positives_per_frame", t.positives_per_frame},
                   {"negatives_per_frame", t.negatives_per_frame},
                   {"frame_stride", t.frame_stride},
                   {"stop_on_convergence", t.stop_on_convergence}};
  j["synth_length"] = c.synth_length;
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& c) { return fnv1a_hex(to_json(c).dump()); }

namespace {

constexpr char kMagic[8] = {'S', 'A', 'N', 'E', 'T', 'C', 'K', 'P'};

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& b) : b_(b) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Sanet<float>& net, const json& metadata) {
  ordered_json header;
  header["config"] = to_json(net.config);
  header["seed"] = net.seed;
  header["metadata"] = metadata;
  const std::string h = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  std::uint32_t count = 0;
  net.params.for_each([&](const std::string&, ParamGroup, std::size_t, const Tensor<float>&) { ++count; });
  put<std::uint32_t>(out, count);
  net.params.for_each([&](const std::string& name, ParamGroup, std::size_t, const Tensor<float>& t) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape().extents()) put<std::uint64_t>(out, e);
    for (float v : t.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put<std::uint32_t>(out, bits);
    }
  });
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Sanet<float>& net, const json& metadata) {
  write_file(path, encode_checkpoint(net, metadata));
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.bytes(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw CheckpointError("not a SANet checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint64_t>("header length");
  json header;
  try {
    header = json::parse(r.bytes(static_cast<std::size_t>(header_len), "header"));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (!header.contains("config") || !header.contains("seed")) throw CheckpointError("checkpoint header lacks config or seed");
  SanetConfig config;
  try {
    config = network_config_from_json(header["config"]);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config is inconsistent: ") + e.what());
  }
  Checkpoint ck;
  ck.net = build_network<float>(config, header["seed"].get<std::uint64_t>());
  ck.metadata = header.value("metadata", json::object());

  const auto count = r.get<std::uint32_t>("tensor count");
  std::uint32_t expected = 0;
  ck.net.params.for_each([&](const std::string&, ParamGroup, std::size_t, const Tensor<float>&) { ++expected; });
  if (count != expected) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors but its config needs " +
                          std::to_string(expected));
  }
  ck.net.params.for_each([&](const std::string& name, ParamGroup, std::size_t, Tensor<float>& t) {
    const auto len = r.get<std::uint32_t>("tensor name length");
    const std::string stored = r.bytes(len, "tensor name");
    if (stored != name) throw CheckpointError("expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    std::vector<std::size_t> extents;
    for (std::uint32_t i = 0; i < rank; ++i) extents.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("extent")));
    if (extents != t.shape().extents()) {
      throw CheckpointError("tensor '" + name + "' has a shape that does not match the config (expected " +
                            t.shape().str() + ")");
    }
    for (auto& v : t.data()) {
      const auto bits = r.get<std::uint32_t>("tensor data");
      std::memcpy(&v, &bits, sizeof v);
    }
  });
  if (!r.done()) throw CheckpointError("trailing bytes after the last tensor");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void write_run_json(const std::filesystem::path& dir, const std::string& command, std::uint64_t seed,
                    const RunConfig& config, const json& inputs, const json& outputs) {
  ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = config_hash(config);
  j["config"] = to_json(config);
  j["versions"] = {{"sanet", kVersion}, {"checkpoint_format", kCheckpointVersion}};
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  write_file(dir / "run.json", j.dump(2) + "\n");
}

}  // namespace sanet
