#include "gtnet/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace gtnet::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T number(std::string_view key, const std::string& text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw UsageError("invalid value '" + text + "' for key '" + std::string(key) + "'");
  return value;
}

bool boolean(std::string_view key, const std::string& t) {
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw UsageError("invalid boolean '" + t + "' for key '" + std::string(key) + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void set_model(RunConfig& c, std::string_view key, std::string_view value) {
  model::apply_key_value(c.model, key, value);
}

}  // namespace

std::vector<std::string> profile_names() { return {"modelnet40", "shapenet", "s3dis", "synth-cls", "synth-seg"}; }

RunConfig profile_defaults(std::string_view name) {
  RunConfig c;
  c.profile = std::string(name);
  auto& m = c.model;
  if (name == "modelnet40") {
    m.task = model::Task::classification;
    m.blocks = {{3, 64}, {64, 64}, {64, 128}, {128, 256}};
    m.k = 20;
    m.num_classes = 40;
    m.optimizer = OptimizerConfig{0.0001, 0.9, 0.0001, std::nullopt};
    m.epochs = 250;
    m.batch_size = 8;
    c.dataset = "data/modelnet40";
    c.num_points = 1024;
  } else if (name == "shapenet") {
    m.task = model::Task::part_segmentation;
    m.blocks = {{3, 96}, {96, 96}, {96, 96}};
    m.k = 20;
    m.num_classes = 16;
    m.num_parts = 50;
    m.use_alignment = true;
    m.epochs = 200;
    m.batch_size = 10;
    m.optimizer = OptimizerConfig{0.01, 0.9, 0.0001, CosineAnnealing{0.001, 200}};
    c.dataset = "data/shapenet";
    c.num_points = 2048;
  } else if (name == "s3dis") {
    m.task = model::Task::semantic_segmentation;
    m.blocks = {{9, 96}, {96, 96}, {96, 96}, {96, 96}};
    m.k = 15;
    m.num_parts = 13;
    m.epochs = 50;
    m.batch_size = 4;
    m.optimizer = OptimizerConfig{0.01, 0.9, 0.0001, CosineAnnealing{0.001, 50}};
    c.dataset = "data/s3dis";
    c.num_points = 4096;
  } else if (name == "synth-cls") {
    m.task = model::Task::classification;
    m.blocks = {{3, 64}, {64, 64}};
    m.k = 20;
    m.num_classes = 2;
    m.epochs = 200;
    m.batch_size = 8;
    m.optimizer = OptimizerConfig{0.001, 0.9, 0.0001, std::nullopt};
    c.dataset = "synth";
    c.synth.generators = {data::Generator::sphere, data::Generator::cube};
    c.synth.points_per_cloud = 128;
    c.synth.clouds_per_class = 16;
    c.stop_at_train_accuracy = 1.0;
  } else if (name == "synth-seg") {
    m.task = model::Task::part_segmentation;
    m.blocks = {{3, 64}, {64, 64}};
    m.k = 20;
    m.num_classes = 1;
    m.num_parts = 2;
    m.epochs = 50;
    m.batch_size = 8;
    m.optimizer = OptimizerConfig{0.01, 0.9, 0.0001, std::nullopt};
    c.dataset = "synth";
    c.synth.generators = {data::Generator::two_part_rod};
    c.synth.points_per_cloud = 128;
    c.synth.clouds_per_class = 16;
  } else {
    throw UsageError("unknown profile '" + std::string(name) + "' (modelnet40|shapenet|s3dis|synth-cls|synth-seg)");
  }
  return c;
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  try {
    if (key == "profile") {
      if (v != c.profile) throw UsageError("profile must be selected before other settings");
    } else if (key == "seed") {
      set_model(c, key, v);
      c.synth.seed = c.model.seed;
    } else if (key == "dataset") {
      c.dataset = v;
    } else if (key == "synth_generators") {
      c.synth.generators.clear();
      for (const auto& g : split_list(v)) c.synth.generators.push_back(data::parse_generator(g));
    } else if (key == "synth_points") {
      c.synth.points_per_cloud = number<std::size_t>(key, v);
    } else if (key == "synth_clouds_per_class") {
      c.synth.clouds_per_class = number<std::size_t>(key, v);
    } else if (key == "synth_test_clouds_per_class") {
      c.synth_test_clouds_per_class = number<std::size_t>(key, v);
    } else if (key == "synth_noise") {
      c.synth.noise_sigma = number<double>(key, v);
    } else if (key == "num_points") {
      c.num_points = number<std::size_t>(key, v);
    } else if (key == "normalize") {
      c.normalize = boolean(key, v);
    } else if (key == "augment") {
      c.augment = boolean(key, v);
    } else if (key == "augment_scale_min") {
      c.augmentation.scale_min = number<double>(key, v);
    } else if (key == "augment_scale_max") {
      c.augmentation.scale_max = number<double>(key, v);
    } else if (key == "augment_shift") {
      c.augmentation.shift = number<double>(key, v);
    } else if (key == "out") {
      c.out_dir = v;
    } else if (key == "checkpoint") {
      if (v.empty()) c.checkpoint.reset();
      else c.checkpoint = std::filesystem::path(v);
    } else if (key == "log_every") {
      c.log_every = number<int>(key, v);
    } else if (key == "deterministic") {
      c.deterministic = boolean(key, v);
    } else if (key == "threads") {
      c.threads = number<std::size_t>(key, v);
    } else if (key == "stop_at_train_accuracy") {
      c.stop_at_train_accuracy = number<double>(key, v);
    } else if (key == "ablate_axes") {
      c.ablate_axes = split_list(v);
    } else if (key == "export_limit") {
      c.export_limit = number<std::size_t>(key, v);
    } else if (!model::apply_key_value(c.model, key, v)) {
      throw UsageError("unknown config key '" + std::string(key) + "'");
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

RunConfig parse_config(std::string_view text, const std::optional<std::string>& profile_override,
                       const std::string& source) {
  struct Line {
    std::string key, value;
    std::size_t number;
  };
  std::vector<Line> lines;
  std::optional<std::string> profile;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t n = 1; std::getline(in, raw); ++n) {
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(source + ":" + std::to_string(n) + ": expected 'key = value'");
    Line l{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), n};
    if (l.key.empty()) throw UsageError(source + ":" + std::to_string(n) + ": empty key");
    if (l.key == "profile") {
      profile = l.value;
      continue;
    }
    lines.push_back(std::move(l));
  }
  RunConfig c = profile_defaults(profile_override.value_or(profile.value_or("modelnet40")));
  for (const auto& l : lines) {
    try {
      apply_setting(c, l.key, l.value);
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(l.number) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& profile_override) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), profile_override, path.string());
}

std::vector<std::pair<std::string, std::string>> to_key_values(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("profile", c.profile);
  for (auto& p : model::to_key_values(c.model)) kv.push_back(std::move(p));
  kv.emplace_back("dataset", c.dataset);
  std::vector<std::string> gens;
  for (auto g : c.synth.generators) gens.emplace_back(data::generator_name(g));
  kv.emplace_back("synth_generators", join(gens));
  kv.emplace_back("synth_points", std::to_string(c.synth.points_per_cloud));
  kv.emplace_back("synth_clouds_per_class", std::to_string(c.synth.clouds_per_class));
  kv.emplace_back("synth_test_clouds_per_class", std::to_string(c.synth_test_clouds_per_class));
  kv.emplace_back("synth_noise", fmt(c.synth.noise_sigma));
  kv.emplace_back("num_points", std::to_string(c.num_points));
  kv.emplace_back("normalize", c.normalize ? "true" : "false");
  kv.emplace_back("augment", c.augment ? "true" : "false");
  kv.emplace_back("out", c.out_dir.string());
  kv.emplace_back("checkpoint", c.checkpoint ? c.checkpoint->string() : "");
  kv.emplace_back("log_every", std::to_string(c.log_every));
  kv.emplace_back("deterministic", c.deterministic ? "true" : "false");
  kv.emplace_back("threads", std::to_string(c.threads));
  kv.emplace_back("stop_at_train_accuracy", fmt(c.stop_at_train_accuracy));
  kv.emplace_back("ablate_axes", join(c.ablate_axes));
  return kv;
}

std::size_t effective_threads(const RunConfig& c) {
  if (c.deterministic) return 1;
  std::size_t n = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GTNET_THREADS")) {
    std::size_t cap = 0;
    const std::string s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec == std::errc() && ptr == s.data() + s.size() && cap > 0) n = std::min(n, cap);
  }
  return std::max<std::size_t>(n, 1);
}

}  // namespace gtnet::cli
