#include "gtnet/model_config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace gtnet::model {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  T value{};
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || t.empty()) {
    throw std::invalid_argument("invalid value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw std::invalid_argument("invalid boolean '" + t + "' for key '" + std::string(key) + "'");
}

std::vector<std::size_t> parse_widths(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  std::string t = trim(text);
  if (t.empty() || t == "none") return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::string widths_to_string(const std::vector<std::size_t>& w) {
  if (w.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(w[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string_view basis_name(GraphBasis b) {
  return b == GraphBasis::always_coordinates ? "always_coordinates" : "coordinates_first_then_features";
}

}  // namespace

std::string_view task_name(Task t) {
  switch (t) {
    case Task::classification:
      return "classification";
    case Task::part_segmentation:
      return "part_segmentation";
    case Task::semantic_segmentation:
      return "semantic_segmentation";
  }
  return "classification";
}

Task parse_task(std::string_view s) {
  if (s == "classification") return Task::classification;
  if (s == "part_segmentation") return Task::part_segmentation;
  if (s == "semantic_segmentation") return Task::semantic_segmentation;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

bool is_segmentation(Task t) { return t != Task::classification; }

std::string blocks_to_string(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ',';
    out += '(' + std::to_string(blocks[i].in) + ',' + std::to_string(blocks[i].out) + ')';
  }
  return out;
}

std::vector<BlockSpec> parse_blocks(std::string_view s) {
  std::vector<std::size_t> numbers;
  std::string current;
  for (char ch : s) {
    if (ch >= '0' && ch <= '9') {
      current += ch;
    } else if (ch == ',' || ch == ':' || ch == '(' || ch == ')' || ch == ' ' || ch == '\t') {
      if (!current.empty()) {
        numbers.push_back(parse_number<std::size_t>("blocks", current));
        current.clear();
      }
    } else {
      throw std::invalid_argument("invalid character in block list '" + std::string(s) + "'");
    }
  }
  if (!current.empty()) numbers.push_back(parse_number<std::size_t>("blocks", current));
  if (numbers.empty() || numbers.size() % 2 != 0) {
    throw std::invalid_argument("block list '" + std::string(s) + "' must contain (C, D) pairs");
  }
  std::vector<BlockSpec> blocks;
  for (std::size_t i = 0; i < numbers.size(); i += 2) blocks.push_back({numbers[i], numbers[i + 1]});
  return blocks;
}

void ModelConfig::validate() const {
  if (blocks.empty()) throw std::invalid_argument("model needs at least one block");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].in == 0 || blocks[i].out == 0) throw std::invalid_argument("block dimensions must be positive");
    if (i > 0 && blocks[i].in != blocks[i - 1].out) {
      throw std::invalid_argument("block " + std::to_string(i) + " input " + std::to_string(blocks[i].in) +
                                  " does not match previous output " + std::to_string(blocks[i - 1].out));
    }
    if (use_global && blocks[i].out % 4 != 0) {
      throw std::invalid_argument("block " + std::to_string(i) + " output " + std::to_string(blocks[i].out) +
                                  " must be divisible by 4 for global attention");
    }
  }
  if (blocks.front().in < 3) throw std::invalid_argument("first block must take at least the 3 coordinates");
  if (!use_local && !use_global) throw std::invalid_argument("at least one of use_local/use_global must be true");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (output_count() == 0) throw std::invalid_argument("output class count must be positive");
  if (task == Task::part_segmentation && use_label && num_classes == 0) {
    throw std::invalid_argument("part segmentation with labels needs num_classes > 0");
  }
  if (use_alignment && align_widths.size() != 3) throw std::invalid_argument("align_widths needs three entries");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  optimizer.validate();
}

std::vector<std::pair<std::string, std::string>> to_key_values(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.emplace_back("task", std::string(task_name(c.task)));
  kv.emplace_back("blocks", blocks_to_string(c.blocks));
  kv.emplace_back("k", std::to_string(c.k));
  kv.emplace_back("num_classes", std::to_string(c.num_classes));
  kv.emplace_back("num_parts", std::to_string(c.num_parts));
  kv.emplace_back("use_alignment", b(c.use_alignment));
  kv.emplace_back("use_feature_encoding", b(c.use_feature_encoding));
  kv.emplace_back("use_global", b(c.use_global));
  kv.emplace_back("use_local", b(c.use_local));
  kv.emplace_back("use_residual", b(c.use_residual));
  kv.emplace_back("use_label", b(c.use_label));
  kv.emplace_back("scale_global", b(c.scale_global));
  kv.emplace_back("aggregation", std::string(attention::aggregation_name(c.aggregation)));
  kv.emplace_back("encoding", c.encoding == graph::EdgeEncoding::relative ? "relative" : "absolute");
  kv.emplace_back("graph_basis", std::string(basis_name(c.graph_basis)));
  kv.emplace_back("align_widths", widths_to_string(c.align_widths));
  kv.emplace_back("shape_width", std::to_string(c.shape_width));
  kv.emplace_back("label_width", std::to_string(c.label_width));
  kv.emplace_back("cls_hidden", widths_to_string(c.cls_hidden));
  kv.emplace_back("seg_hidden", widths_to_string(c.seg_hidden));
  kv.emplace_back("dropout", format_double(c.dropout));
  kv.emplace_back("zero_init_offset", b(c.zero_init_offset));
  kv.emplace_back("label_smoothing", format_double(c.label_smoothing));
  kv.emplace_back("seed", std::to_string(c.seed));
  kv.emplace_back("learning_rate", format_double(c.optimizer.learning_rate));
  kv.emplace_back("momentum", format_double(c.optimizer.momentum));
  kv.emplace_back("weight_decay", format_double(c.optimizer.weight_decay));
  kv.emplace_back("schedule", c.optimizer.schedule ? "cosine" : "none");
  kv.emplace_back("min_lr", format_double(c.optimizer.schedule ? c.optimizer.schedule->min_lr : 0.0));
  kv.emplace_back("epochs", std::to_string(c.epochs));
  kv.emplace_back("batch_size", std::to_string(c.batch_size));
  return kv;
}

bool apply_key_value(ModelConfig& c, std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  if (key == "task") {
    c.task = parse_task(value);
  } else if (key == "blocks") {
    c.blocks = parse_blocks(value);
  } else if (key == "k") {
    c.k = parse_number<std::size_t>(key, value);
  } else if (key == "num_classes") {
    c.num_classes = parse_number<std::size_t>(key, value);
  } else if (key == "num_parts") {
    c.num_parts = parse_number<std::size_t>(key, value);
  } else if (key == "use_alignment") {
    c.use_alignment = parse_bool(key, value);
  } else if (key == "use_feature_encoding") {
    c.use_feature_encoding = parse_bool(key, value);
  } else if (key == "use_global") {
    c.use_global = parse_bool(key, value);
  } else if (key == "use_local") {
    c.use_local = parse_bool(key, value);
  } else if (key == "use_residual") {
    c.use_residual = parse_bool(key, value);
  } else if (key == "use_label") {
    c.use_label = parse_bool(key, value);
  } else if (key == "scale_global") {
    c.scale_global = parse_bool(key, value);
  } else if (key == "aggregation") {
    c.aggregation = attention::parse_aggregation(value);
  } else if (key == "encoding") {
    if (value == "relative")
      c.encoding = graph::EdgeEncoding::relative;
    else if (value == "absolute")
      c.encoding = graph::EdgeEncoding::absolute;
    else
      throw std::invalid_argument("unknown encoding '" + value + "' (relative|absolute)");
  } else if (key == "graph_basis") {
    if (value == "coordinates_first_then_features")
      c.graph_basis = GraphBasis::coordinates_first_then_features;
    else if (value == "always_coordinates")
      c.graph_basis = GraphBasis::always_coordinates;
    else
      throw std::invalid_argument("unknown graph_basis '" + value + "'");
  } else if (key == "align_widths") {
    c.align_widths = parse_widths(key, value);
  } else if (key == "shape_width") {
    c.shape_width = parse_number<std::size_t>(key, value);
  } else if (key == "label_width") {
    c.label_width = parse_number<std::size_t>(key, value);
  } else if (key == "cls_hidden") {
    c.cls_hidden = parse_widths(key, value);
  } else if (key == "seg_hidden") {
    c.seg_hidden = parse_widths(key, value);
  } else if (key == "dropout") {
    c.dropout = parse_number<double>(key, value);
  } else if (key == "zero_init_offset") {
    c.zero_init_offset = parse_bool(key, value);
  } else if (key == "label_smoothing") {
    c.label_smoothing = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "learning_rate" || key == "lr") {
    c.optimizer.learning_rate = parse_number<double>(key, value);
  } else if (key == "momentum") {
    c.optimizer.momentum = parse_number<double>(key, value);
  } else if (key == "weight_decay") {
    c.optimizer.weight_decay = parse_number<double>(key, value);
  } else if (key == "schedule") {
    if (value == "none") {
      c.optimizer.schedule.reset();
    } else if (value == "cosine") {
      if (!c.optimizer.schedule) c.optimizer.schedule = CosineAnnealing{0.0, c.epochs > 0 ? c.epochs : 1};
    } else {
      throw std::invalid_argument("unknown schedule '" + value + "' (none|cosine)");
    }
  } else if (key == "min_lr") {
    const double v = parse_number<double>(key, value);
    if (c.optimizer.schedule) c.optimizer.schedule->min_lr = v;
    else if (v != 0.0) c.optimizer.schedule = CosineAnnealing{v, c.epochs > 0 ? c.epochs : 1};
  } else if (key == "epochs") {
    c.epochs = parse_number<int>(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_number<std::size_t>(key, value);
  } else {
    return false;
  }
  if (c.optimizer.schedule) c.optimizer.schedule->total_epochs = c.epochs > 0 ? c.epochs : 1;
  return true;
}

std::optional<std::string> architecture_mismatch(const ModelConfig& stored, const ModelConfig& requested) {
  if (stored.blocks != requested.blocks) {
    const std::size_t n = std::min(stored.blocks.size(), requested.blocks.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!(stored.blocks[i] == requested.blocks[i])) {
        return "block " + std::to_string(i) + ": checkpoint (" + std::to_string(stored.blocks[i].in) + "," +
               std::to_string(stored.blocks[i].out) + ") vs requested (" + std::to_string(requested.blocks[i].in) +
               "," + std::to_string(requested.blocks[i].out) + ")";
      }
    }
    return "block count: checkpoint " + std::to_string(stored.blocks.size()) + " vs requested " +
           std::to_string(requested.blocks.size());
  }
  static constexpr std::string_view ignored[] = {"seed",   "learning_rate", "momentum",   "weight_decay",
                                                 "schedule", "min_lr",      "epochs",     "batch_size",
                                                 "dropout", "label_smoothing", "zero_init_offset"};
  const auto a = to_key_values(stored);
  const auto b = to_key_values(requested);
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool skip = false;
    for (auto key : ignored) skip = skip || a[i].first == key;
    if (skip) continue;
    if (a[i].second != b[i].second) {
      return a[i].first + ": checkpoint '" + a[i].second + "' vs requested '" + b[i].second + "'";
    }
  }
  return std::nullopt;
}

}  // namespace gtnet::model
