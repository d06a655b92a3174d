#include "iterlstm/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace iterlstm {

static_assert(std::endian::native == std::endian::little,
              "params.bin stores little-endian float64");

namespace {

using nlohmann::ordered_json;

ordered_json iteration_to_json(const IterationConfig& it) {
  return ordered_json{
      {"mode", it.mode == IterationMode::kFixed ? "fixed" : "adaptive"},
      {"fixed_iterations", it.fixed_iterations},
      {"max_iterations", it.max_iterations},
      {"threshold_base", it.threshold_base},
      {"threshold_step", it.threshold_step},
      {"threshold_cap", it.threshold_cap},
      {"residual", it.residual}};
}

IterationConfig iteration_from_json(const ordered_json& j) {
  IterationConfig it;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "fixed")
    it.mode = IterationMode::kFixed;
  else if (mode == "adaptive")
    it.mode = IterationMode::kAdaptive;
  else
    throw IntegrityError("unknown iteration mode: " + mode);
  it.fixed_iterations = j.at("fixed_iterations").get<std::size_t>();
  it.max_iterations = j.at("max_iterations").get<std::size_t>();
  it.threshold_base = j.at("threshold_base").get<double>();
  it.threshold_step = j.at("threshold_step").get<double>();
  it.threshold_cap = j.at("threshold_cap").get<double>();
  it.residual = j.at("residual").get<bool>();
  return it;
}

ordered_json config_to_json(const TrainConfig& cfg) {
  return ordered_json{
      {"layers", cfg.layers},
      {"units", cfg.units},
      {"batch_size", cfg.batch_size},
      {"unroll_length", cfg.unroll_length},
      {"epochs", cfg.epochs},
      {"lr_base", cfg.lr_base},
      {"lr_constant_epochs", cfg.lr_constant_epochs},
      {"lr_decay", cfg.lr_decay},
      {"keep_prob", cfg.keep_prob},
      {"init_range", cfg.init_range},
      {"clip_norm", cfg.clip_norm},
      {"l2_recurrent", cfg.l2_recurrent},
      {"seed", cfg.seed},
      {"token_mode", cfg.token_mode == TokenMode::kWord ? "word" : "char"},
      {"iteration", iteration_to_json(cfg.iteration)}};
}

TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig cfg;
  cfg.layers = j.at("layers").get<std::size_t>();
  cfg.units = j.at("units").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.unroll_length = j.at("unroll_length").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.lr_base = j.at("lr_base").get<double>();
  cfg.lr_constant_epochs = j.at("lr_constant_epochs").get<std::size_t>();
  cfg.lr_decay = j.at("lr_decay").get<double>();
  cfg.keep_prob = j.at("keep_prob").get<double>();
  cfg.init_range = j.at("init_range").get<double>();
  cfg.clip_norm = j.at("clip_norm").get<double>();
  cfg.l2_recurrent = j.at("l2_recurrent").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const std::string mode = j.at("token_mode").get<std::string>();
  if (mode == "word")
    cfg.token_mode = TokenMode::kWord;
  else if (mode == "char")
    cfg.token_mode = TokenMode::kChar;
  else
    throw IntegrityError("unknown token mode: " + mode);
  cfg.iteration = iteration_from_json(j.at("iteration"));
  return cfg;
}

// Model shell with the right shapes and zeroed buffers.
LmModel shell_model(std::size_t vocab_size, const TrainConfig& cfg) {
  LmModel m;
  m.vocab_size = vocab_size;
  m.units = cfg.units;
  m.num_layers = cfg.layers;
  m.iteration = cfg.iteration;
  m.embedding = Matrix(vocab_size, cfg.units);
  m.softmax_w = Matrix(vocab_size, cfg.units);
  m.softmax_b.assign(vocab_size, 0.0);
  m.cells.reserve(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l)
    m.cells.emplace_back(cfg.units, cfg.units);
  return m;
}

}  // namespace

void save_checkpoint(const std::string& prefix, const CheckpointMeta& meta,
                     LmModel& model) {
  auto views = model.tensor_views();
  ordered_json tensors = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& v : views) {
    tensors.push_back(
        ordered_json{{"name", v.name}, {"shape", v.shape}, {"offset", offset}});
    offset += v.size * sizeof(double);
  }
  ordered_json manifest{
      {"format_version", meta.format_version},
      {"config", config_to_json(meta.config)},
      {"vocab_size", meta.vocab_size},
      {"epoch", meta.epoch},
      {"step", meta.step},
      {"best_valid_ppl", std::isfinite(meta.best_valid_ppl)
                             ? ordered_json(meta.best_valid_ppl)
                             : ordered_json(nullptr)},
      {"rng_state", meta.rng_state},
      {"tensors", tensors},
      {"total_bytes", offset}};

  std::ofstream mf(prefix + ".manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw ConfigError("cannot write checkpoint manifest: " + prefix);
  mf << manifest.dump(2) << "\n";
  mf.close();

  std::ofstream bin(prefix + ".params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw ConfigError("cannot write checkpoint buffer: " + prefix);
  for (const auto& v : views)
    bin.write(reinterpret_cast<const char*>(v.data),
              std::streamsize(v.size * sizeof(double)));
}

bool checkpoint_exists(const std::string& prefix) {
  return std::filesystem::exists(prefix + ".manifest.json");
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
  const std::string manifest_path = prefix + ".manifest.json";
  std::ifstream mf(manifest_path, std::ios::binary);
  if (!mf) throw ConfigError("cannot read checkpoint manifest: " + manifest_path);

  ordered_json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw IntegrityError("checkpoint manifest parse failure: " +
                         std::string(e.what()));
  }

  try {
    LoadedCheckpoint out;
    out.meta.format_version = manifest.at("format_version").get<int>();
    if (out.meta.format_version != 1)
      throw IntegrityError("unsupported checkpoint format version");
    out.meta.config = config_from_json(manifest.at("config"));
    out.meta.vocab_size = manifest.at("vocab_size").get<std::size_t>();
    out.meta.epoch = manifest.at("epoch").get<std::size_t>();
    out.meta.step = manifest.at("step").get<std::size_t>();
    const auto& best = manifest.at("best_valid_ppl");
    out.meta.best_valid_ppl = best.is_null()
                                  ? std::numeric_limits<double>::infinity()
                                  : best.get<double>();
    out.meta.rng_state = manifest.at("rng_state").get<std::string>();

    out.model = shell_model(out.meta.vocab_size, out.meta.config);
    auto views = out.model.tensor_views();

    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != views.size())
      throw IntegrityError("checkpoint tensor directory size mismatch");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < views.size(); ++i) {
      const auto& t = tensors.at(i);
      if (t.at("name").get<std::string>() != views[i].name)
        throw IntegrityError("checkpoint tensor name mismatch: expected " +
                             views[i].name);
      if (t.at("shape").get<std::vector<std::size_t>>() != views[i].shape)
        throw IntegrityError("checkpoint tensor shape mismatch: " +
                             views[i].name);
      if (t.at("offset").get<std::size_t>() != offset)
        throw IntegrityError("checkpoint tensor offset mismatch: " +
                             views[i].name);
      offset += views[i].size * sizeof(double);
    }
    if (manifest.at("total_bytes").get<std::size_t>() != offset)
      throw IntegrityError("checkpoint byte count mismatch");

    const std::string bin_path = prefix + ".params.bin";
    std::ifstream bin(bin_path, std::ios::binary | std::ios::ate);
    if (!bin) throw IntegrityError("checkpoint buffer missing: " + bin_path);
    if (static_cast<std::size_t>(bin.tellg()) != offset)
      throw IntegrityError("checkpoint buffer size mismatch");
    bin.seekg(0);
    for (auto& v : views)
      if (!bin.read(reinterpret_cast<char*>(v.data),
                    std::streamsize(v.size * sizeof(double))))
        throw IntegrityError("checkpoint buffer truncated");

    out.model.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint manifest field error: " +
                         std::string(e.what()));
  } catch (const ConfigError& e) {
    throw IntegrityError("checkpoint holds invalid configuration: " +
                         std::string(e.what()));
  }
}

}  // namespace iterlstm
