#include "gtnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gtnet::model {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string shape_field(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape_field(const std::string& text) {
  Shape s;
  if (text == "scalar") return s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      s.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw CheckpointError("malformed shape '" + text + "' in manifest");
    }
  }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct RawFile {
  CheckpointManifest manifest;
  std::string blob;
};

CheckpointManifest parse_manifest(const std::string& text) {
  CheckpointManifest m;
  std::istringstream in(text);
  std::string line;
  std::string section;
  bool have_version = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (section == "parameters") {
      std::vector<std::string> fields;
      std::stringstream ls(line);
      std::string f;
      while (std::getline(ls, f, '\t')) fields.push_back(f);
      if (fields.size() != 4) throw CheckpointError("malformed parameter line '" + line + "'");
      ParameterEntry e;
      e.name = fields[0];
      e.shape = parse_shape_field(fields[1]);
      try {
        e.offset = std::stoull(fields[2]);
        e.length = std::stoull(fields[3]);
      } catch (const std::exception&) {
        throw CheckpointError("malformed offsets in parameter line '" + line + "'");
      }
      m.parameters.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed manifest line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      if (key == "format_version") {
        try {
          m.format_version = std::stoi(value);
        } catch (const std::exception&) {
          throw CheckpointError("malformed format_version '" + value + "'");
        }
        have_version = true;
      } else if (key == "blob_dtype") {
        if (value != "f32le") throw CheckpointError("unsupported blob_dtype '" + value + "'");
      }
    } else if (section == "config") {
      try {
        if (!apply_key_value(m.config, key, value)) throw CheckpointError("unknown config key '" + key + "'");
      } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("bad config in manifest: ") + e.what());
      }
    }
  }
  if (!have_version) throw CheckpointError("manifest lacks format_version");
  if (m.format_version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint format_version " + std::to_string(m.format_version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  return m;
}

RawFile read_raw(const std::filesystem::path& path, bool with_blob) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw CheckpointError("'" + path.string() + "' is not a GTNCKPT1 checkpoint");
  }
  std::uint64_t manifest_len = 0;
  in.read(reinterpret_cast<char*>(&manifest_len), sizeof(manifest_len));
  if (in.gcount() != sizeof(manifest_len)) throw CheckpointError("truncated checkpoint header");
  std::string manifest(manifest_len, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(manifest_len));
  if (static_cast<std::uint64_t>(in.gcount()) != manifest_len) throw CheckpointError("truncated manifest");
  RawFile raw;
  raw.manifest = parse_manifest(manifest);
  if (with_blob) raw.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

}  // namespace

void save_checkpoint(const GTNet& model, const std::filesystem::path& path) {
  std::ostringstream manifest;
  manifest << "format_version = " << kCheckpointVersion << "\n";
  manifest << "blob_dtype = f32le\n";
  manifest << "[config]\n";
  for (const auto& [k, v] : to_key_values(model.config())) manifest << k << " = " << v << "\n";
  manifest << "[parameters]\n";

  std::string blob;
  for (const auto& p : model.parameters().all()) {
    const auto values = p.tensor.data();
    const std::uint64_t offset = blob.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float f = static_cast<float>(values[i]);
      if (static_cast<double>(f) != values[i]) {
        throw CheckpointError("parameter '" + p.name + "' entry " + std::to_string(i) +
                              " is not representable as float32; round parameters before saving");
      }
      char bytes[sizeof(float)];
      std::memcpy(bytes, &f, sizeof(float));
      blob.append(bytes, sizeof(float));
    }
    manifest << p.name << '\t' << shape_field(p.tensor.shape()) << '\t' << offset << '\t' << (blob.size() - offset)
             << "\n";
  }

  const std::string text = manifest.str();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(kCheckpointMagic, 8);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointManifest read_manifest(const std::filesystem::path& path) { return read_raw(path, false).manifest; }

std::unique_ptr<GTNet> load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  RawFile raw = read_raw(path, true);
  if (expected) {
    if (auto diff = architecture_mismatch(raw.manifest.config, *expected)) {
      throw CheckpointError("checkpoint config conflicts with requested config: " + *diff);
    }
  }
  std::unique_ptr<GTNet> model;
  try {
    model = std::make_unique<GTNet>(raw.manifest.config);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid config in checkpoint: ") + e.what());
  }
  auto& store = model->parameters();
  std::size_t seen = 0;
  for (const auto& entry : raw.manifest.parameters) {
    const Parameter* found = store.find(entry.name);
    if (found == nullptr) throw CheckpointError("unknown parameter name '" + entry.name + "' in checkpoint");
    auto& p = store.get(entry.name);
    if (p.tensor.shape() != entry.shape) {
      throw CheckpointError("parameter '" + entry.name + "' has shape " + shape_to_string(entry.shape) +
                            ", model expects " + shape_to_string(p.tensor.shape()));
    }
    const std::uint64_t expected_len = shape_numel(entry.shape) * sizeof(float);
    if (entry.length != expected_len) throw CheckpointError("parameter '" + entry.name + "' has wrong byte length");
    if (entry.offset + entry.length > raw.blob.size()) {
      throw CheckpointError("truncated blob: parameter '" + entry.name + "' extends past end of file");
    }
    auto values = p.tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      float f;
      std::memcpy(&f, raw.blob.data() + entry.offset + i * sizeof(float), sizeof(float));
      values[i] = static_cast<double>(f);
    }
    ++seen;
  }
  if (seen != store.all().size()) {
    for (const auto& p : store.all()) {
      bool listed = false;
      for (const auto& e : raw.manifest.parameters) listed = listed || e.name == p.name;
      if (!listed) throw CheckpointError("checkpoint is missing parameter '" + p.name + "'");
    }
  }
  return model;
}

}  // namespace gtnet::model
