#include "saliq/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "saliq/quant.hpp"

namespace saliq {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'C', 'K'};
constexpr uint16_t kVersion = 1;

struct FileCloser {
  void operator()(FILE* fp) const {
    if (fp) std::fclose(fp);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void corrupt(const std::string& path, int64_t offset, const std::string& what) {
  throw std::runtime_error("checkpoint '" + path + "': " + what + " at offset " + std::to_string(offset));
}

class Reader {
 public:
  Reader(FILE* fp, std::string path) : fp_(fp), path_(std::move(path)) {}

  void read(void* dst, size_t n, const char* what) {
    if (std::fread(dst, 1, n, fp_) != n) corrupt(path_, offset_, std::string("unexpected end of file reading ") + what);
    offset_ += static_cast<int64_t>(n);
  }

  uint16_t read_u16(const char* what) {
    uint8_t b[2];
    read(b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }

  uint32_t read_u32(const char* what) {
    uint8_t b[4];
    read(b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }

  int64_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  FILE* fp_;
  std::string path_;
  int64_t offset_ = 0;
};

void write_u16(FILE* fp, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
  std::fwrite(b, 1, 2, fp);
}

void write_u32(FILE* fp, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>((v >> 8) & 0xff),
                        static_cast<uint8_t>((v >> 16) & 0xff), static_cast<uint8_t>((v >> 24) & 0xff)};
  std::fwrite(b, 1, 4, fp);
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find(sep, start);
    if (end == std::string::npos) end = s.size();
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::string float_to_hex(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", static_cast<double>(v));
  return buf;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path, bool packed, const CheckpointMeta* meta) {
  if (packed && !model.quant_spec()) {
    throw std::invalid_argument("save_checkpoint: packed storage requires a quant spec");
  }

  std::string header;
  auto put = [&header](const std::string& key, const std::string& value) { header += key + "=" + value + "\n"; };
  put("arch", format_arch(model.layers()));
  put("input_channels", std::to_string(model.input_channels()));
  put("resolution", std::to_string(model.resolution()));
  put("num_classes", std::to_string(model.num_classes()));
  put("storage", packed ? "packed" : "float");
  put("has_quant", model.quant_spec() ? "1" : "0");
  if (model.quant_spec()) {
    put("bits", std::to_string(model.quant_spec()->bits));
    put("quantize_weights", model.quant_spec()->quantize_weights ? "1" : "0");
  }
  {
    std::vector<std::string> alphas;
    for (int idx : model.pact_layer_indices()) {
      alphas.push_back(float_to_hex(model.layers()[static_cast<size_t>(idx)].alpha));
    }
    put("alpha_count", std::to_string(alphas.size()));
    put("alphas", join(alphas, ','));
  }
  if (meta) {
    if (!meta->class_names.empty()) put("class_names", join(meta->class_names, ','));
    for (const auto& [key, value] : meta->extra) put(key, value);
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
  std::fwrite(kMagic, 1, 4, fp.get());
  write_u16(fp.get(), kVersion);
  write_u32(fp.get(), static_cast<uint32_t>(header.size()));
  std::fwrite(header.data(), 1, header.size(), fp.get());

  const int bits = model.quant_spec() ? model.quant_spec()->bits : 0;
  for (const Layer& layer : model.layers()) {
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kDense) {
      if (packed) {
        const float scale = weight_scale(layer.weight, bits);
        const std::vector<uint8_t> codes = pack_weights(layer.weight, bits, scale);
        std::fwrite(&scale, sizeof(float), 1, fp.get());
        std::fwrite(codes.data(), 1, codes.size(), fp.get());
      } else {
        std::fwrite(layer.weight.data(), sizeof(float), static_cast<size_t>(layer.weight.numel()), fp.get());
      }
      if (layer.kind == LayerKind::kDense) {
        std::fwrite(layer.bias.data(), sizeof(float), static_cast<size_t>(layer.bias.numel()), fp.get());
      }
    }
  }
  if (std::ferror(fp.get())) throw std::runtime_error("save_checkpoint: write error on '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  Reader reader(fp.get(), path);

  char magic[4];
  reader.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) corrupt(path, 0, "bad magic (expected SQCK)");
  const uint16_t version = reader.read_u16("version");
  if (version != kVersion) corrupt(path, 4, "unsupported version " + std::to_string(version));
  const uint32_t header_len = reader.read_u32("header length");
  std::string header(header_len, '\0');
  reader.read(header.data(), header_len, "header");

  std::map<std::string, std::string> kv;
  for (const std::string& line : split(header, '\n')) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) corrupt(path, 10, "malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) corrupt(path, 10, "missing header key '" + key + "'");
    return it->second;
  };

  const std::string arch = need("arch");
  const int channels = std::stoi(need("input_channels"));
  const int resolution = std::stoi(need("resolution"));
  const int num_classes = std::stoi(need("num_classes"));
  const bool packed = need("storage") == "packed";
  const bool has_quant = need("has_quant") == "1";
  int bits = 0;
  bool quantize_weights = false;
  if (has_quant) {
    bits = std::stoi(need("bits"));
    quantize_weights = need("quantize_weights") == "1";
  }
  if (packed && !has_quant) corrupt(path, 10, "packed storage without quant spec");

  Model model(arch, channels, resolution, 1.0f);
  if (model.num_classes() != num_classes) corrupt(path, 10, "num_classes does not match architecture");
  if (has_quant) model.quant_spec() = QuantSpec{bits, quantize_weights};

  {
    const std::vector<int> pact = model.pact_layer_indices();
    const size_t count = static_cast<size_t>(std::stoul(need("alpha_count")));
    if (count != pact.size()) corrupt(path, 10, "alpha_count does not match architecture");
    if (count > 0) {
      const std::vector<std::string> parts = split(need("alphas"), ',');
      if (parts.size() != count) corrupt(path, 10, "alphas list size mismatch");
      for (size_t i = 0; i < count; ++i) {
        const float a = std::strtof(parts[i].c_str(), nullptr);
        if (!(a > 0.0f)) corrupt(path, 10, "non-positive alpha in header");
        model.layers()[static_cast<size_t>(pact[i])].alpha = a;
      }
    }
  }

  for (Layer& layer : model.layers()) {
    if (layer.kind != LayerKind::kConv && layer.kind != LayerKind::kDense) continue;
    if (packed) {
      float scale = 0.0f;
      reader.read(&scale, sizeof(float), "weight scale");
      const int64_t n = layer.weight.numel();
      std::vector<uint8_t> codes(static_cast<size_t>((n * bits + 7) / 8));
      reader.read(codes.data(), codes.size(), "packed weights");
      layer.weight = unpack_weights(codes, layer.weight.shape(), bits, scale);
    } else {
      reader.read(layer.weight.data(), sizeof(float) * static_cast<size_t>(layer.weight.numel()), "weights");
    }
    if (layer.kind == LayerKind::kDense) {
      reader.read(layer.bias.data(), sizeof(float) * static_cast<size_t>(layer.bias.numel()), "bias");
    }
    if (!layer.weight.all_finite()) corrupt(path, reader.offset(), "non-finite weight values");
  }

  LoadedCheckpoint out;
  out.model = std::move(model);
  out.packed = packed;
  out.header = std::move(kv);
  if (auto it = out.header.find("class_names"); it != out.header.end()) {
    out.class_names = split(it->second, ',');
  }
  return out;
}

}  // namespace saliq
