#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "hppi/model_zoo.hpp"
#include "hppi/quantize.hpp"

namespace hppi {

namespace {

constexpr std::uint8_t kMagic[4] = {'H', 'P', 'P', 'I'};
constexpr std::uint16_t kFormatVersion = 1;

enum class Dtype : std::uint8_t { F64 = 0, Int8 = 1 };

struct Writer {
  std::vector<std::uint8_t> buf;

  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void str(std::string_view s) {
    if (s.size() > 0xFFFF) throw ModelIoError("name too long");
    u16(static_cast<std::uint16_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
};

struct Reader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw TruncatedFileError("model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf[pos]) |
                      static_cast<std::uint16_t>(buf[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    const std::uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

void write_dims(Writer& w, const std::vector<std::size_t>& dims) {
  w.u8(static_cast<std::uint8_t>(dims.size()));
  for (std::size_t d : dims) w.u32(static_cast<std::uint32_t>(d));
}

std::vector<std::size_t> read_dims(Reader& r) {
  const std::uint8_t n = r.u8();
  std::vector<std::size_t> dims(n);
  for (std::uint8_t i = 0; i < n; ++i) dims[i] = r.u32();
  return dims;
}

void write_hyper(Writer& w, const LayerSpec& s) {
  switch (s.type) {
    case LayerType::Input:
      w.u8(static_cast<std::uint8_t>(s.slot));
      write_dims(w, s.shape);
      break;
    case LayerType::Conv2d:
      w.u32(static_cast<std::uint32_t>(s.kernel));
      w.u32(static_cast<std::uint32_t>(s.stride));
      w.u8(static_cast<std::uint8_t>(s.padding));
      w.u32(static_cast<std::uint32_t>(s.in_width));
      w.u32(static_cast<std::uint32_t>(s.out_width));
      break;
    case LayerType::BatchNorm:
      w.u32(static_cast<std::uint32_t>(s.in_width));
      w.f64(s.eps);
      w.f64(s.momentum);
      break;
    case LayerType::MaxPool:
      w.u32(static_cast<std::uint32_t>(s.kernel));
      w.u32(static_cast<std::uint32_t>(s.stride));
      break;
    case LayerType::Lstm:
    case LayerType::Dense:
      w.u32(static_cast<std::uint32_t>(s.in_width));
      w.u32(static_cast<std::uint32_t>(s.out_width));
      break;
    case LayerType::Eca:
      w.u32(static_cast<std::uint32_t>(s.in_width));
      w.u32(static_cast<std::uint32_t>(s.kernel));
      break;
    case LayerType::Reshape:
      write_dims(w, s.shape);
      break;
    case LayerType::Dsc:
      w.u32(static_cast<std::uint32_t>(s.kernel));
      w.u32(static_cast<std::uint32_t>(s.in_width));
      w.u32(static_cast<std::uint32_t>(s.out_width));
      break;
    default:
      break;  // Relu, GapFrames, Gap, Concat, Softmax, SimplexNorm: no fields
  }
  w.u8(static_cast<std::uint8_t>(s.inputs.size()));
  for (int p : s.inputs) w.u32(static_cast<std::uint32_t>(p));
  w.u8(s.trainable ? 1 : 0);
}

LayerSpec read_hyper(Reader& r, LayerType type, std::string name) {
  LayerSpec s;
  s.type = type;
  s.name = std::move(name);
  switch (type) {
    case LayerType::Input:
      s.slot = static_cast<InputSlot>(r.u8());
      s.shape = read_dims(r);
      break;
    case LayerType::Conv2d:
      s.kernel = static_cast<int>(r.u32());
      s.stride = static_cast<int>(r.u32());
      s.padding = static_cast<kernels::Padding>(r.u8());
      s.in_width = r.u32();
      s.out_width = r.u32();
      break;
    case LayerType::BatchNorm:
      s.in_width = r.u32();
      s.eps = r.f64();
      s.momentum = r.f64();
      break;
    case LayerType::MaxPool:
      s.kernel = static_cast<int>(r.u32());
      s.stride = static_cast<int>(r.u32());
      break;
    case LayerType::Lstm:
    case LayerType::Dense:
      s.in_width = r.u32();
      s.out_width = r.u32();
      break;
    case LayerType::Eca:
      s.in_width = r.u32();
      s.kernel = static_cast<int>(r.u32());
      break;
    case LayerType::Reshape:
      s.shape = read_dims(r);
      break;
    case LayerType::Dsc:
      s.kernel = static_cast<int>(r.u32());
      s.in_width = r.u32();
      s.out_width = r.u32();
      break;
    default:
      break;
  }
  const std::uint8_t n_inputs = r.u8();
  s.inputs.resize(n_inputs);
  for (std::uint8_t i = 0; i < n_inputs; ++i) s.inputs[i] = static_cast<int>(r.u32());
  s.trainable = r.u8() != 0;
  return s;
}

struct ParamRecord {
  std::string name;
  bool trainable = true;
  Dtype dtype = Dtype::F64;
  std::vector<std::size_t> shape;
  Tensor values;  // dequantized when dtype == Int8
};

struct LayerRecord {
  LayerSpec spec;  // name still carries the graph prefix
  int alias_target = -1;
  std::vector<ParamRecord> params;
  bool had_int8 = false;
};

}  // namespace

std::vector<std::uint8_t> serialize_models(std::span<const ModelGraph* const> graphs,
                                           bool quantized) {
  std::size_t total_layers = 0;
  for (const ModelGraph* g : graphs) total_layers += g->nodes.size();
  if (total_layers > 0xFFFF) throw ModelIoError("too many layers");

  Writer w;
  w.buf.insert(w.buf.end(), std::begin(kMagic), std::end(kMagic));
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(total_layers));

  // First parameter tensor pointer -> global layer index, for alias records.
  std::map<const Tensor*, std::size_t> owner;
  std::size_t global = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const ModelGraph& g = *graphs[gi];
    std::string prefix;
    if (graphs.size() > 1)
      prefix = (g.name.empty() ? "g" + std::to_string(gi) : g.name) + "/";
    const std::size_t base = global;
    for (const Node& node : g.nodes) {
      w.str(prefix + node.spec.name);
      w.u8(static_cast<std::uint8_t>(node.spec.type));
      // Producer ids are stored relative to the whole file.
      LayerSpec spec = node.spec;
      for (int& p : spec.inputs) p += static_cast<int>(base);
      write_hyper(w, spec);

      std::size_t alias_of = SIZE_MAX;
      if (!node.params.empty()) {
        auto it = owner.find(node.params[0].value.get());
        if (it != owner.end()) alias_of = it->second;
        else owner.emplace(node.params[0].value.get(), global);
      }
      if (alias_of != SIZE_MAX) {
        w.u8(1);
        w.u16(static_cast<std::uint16_t>(alias_of));
      } else {
        w.u8(0);
        w.u16(static_cast<std::uint16_t>(node.params.size()));
        for (const Param& p : node.params) {
          w.str(p.name);
          w.u8(p.trainable ? 1 : 0);
          const bool as_int8 = quantized && p.trainable;
          w.u8(static_cast<std::uint8_t>(as_int8 ? Dtype::Int8 : Dtype::F64));
          write_dims(w, p.value->shape);
          if (as_int8) {
            const QuantizedTensor q = quantize_tensor_int8(*p.value);
            w.f64(q.scale);
            for (std::int8_t v : q.values) w.u8(static_cast<std::uint8_t>(v));
          } else {
            for (double v : p.value->data) w.f64(v);
          }
        }
      }
      ++global;
    }
  }
  return w.buf;
}

std::vector<ModelGraph> deserialize_models(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw BadMagicError("bad magic: not a model file");
  r.pos = 4;
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion)
    throw UnsupportedVersionError("unsupported model format version " +
                                  std::to_string(version));
  const std::uint16_t n_layers = r.u16();

  std::vector<LayerRecord> records;
  records.reserve(n_layers);
  for (std::uint16_t i = 0; i < n_layers; ++i) {
    LayerRecord rec;
    std::string name = r.str();
    const std::uint8_t type_tag = r.u8();
    if (type_tag > static_cast<std::uint8_t>(LayerType::SimplexNorm))
      throw ModelIoError("unknown layer type tag " + std::to_string(type_tag));
    rec.spec = read_hyper(r, static_cast<LayerType>(type_tag), std::move(name));
    const std::uint8_t alias_flag = r.u8();
    if (alias_flag == 1) {
      rec.alias_target = static_cast<int>(r.u16());
      if (rec.alias_target >= static_cast<int>(i))
        throw ModelIoError("alias target must precede the aliasing layer");
    } else {
      const std::uint16_t n_params = r.u16();
      for (std::uint16_t p = 0; p < n_params; ++p) {
        ParamRecord pr;
        pr.name = r.str();
        pr.trainable = r.u8() != 0;
        pr.dtype = static_cast<Dtype>(r.u8());
        pr.shape = read_dims(r);
        const std::size_t n = Tensor::numel_of(pr.shape);
        if (pr.dtype == Dtype::Int8) {
          QuantizedTensor q;
          q.scale = r.f64();
          q.shape = pr.shape;
          q.values.resize(n);
          r.need(n);
          for (std::size_t j = 0; j < n; ++j)
            q.values[j] = static_cast<std::int8_t>(r.buf[r.pos + j]);
          r.pos += n;
          pr.values = dequantize(q);
          rec.had_int8 = true;
        } else if (pr.dtype == Dtype::F64) {
          pr.values = Tensor(pr.shape);
          for (std::size_t j = 0; j < n; ++j) pr.values.data[j] = r.f64();
        } else {
          throw ModelIoError("unknown tensor dtype");
        }
        rec.params.push_back(std::move(pr));
      }
    }
    records.push_back(std::move(rec));
  }
  if (r.pos != bytes.size()) throw ModelIoError("trailing bytes after last layer");

  // Consecutive layers sharing a name prefix (before the first '/') form one
  // graph; single-model files carry no prefix.
  std::vector<ModelGraph> graphs;
  std::vector<std::pair<std::size_t, std::size_t>> node_of_global;  // graph, node
  std::size_t idx = 0;
  while (idx < records.size()) {
    const auto prefix_of = [](const std::string& n) {
      const std::size_t slash = n.find('/');
      return slash == std::string::npos ? std::string() : n.substr(0, slash);
    };
    const std::string prefix = prefix_of(records[idx].spec.name);
    const std::size_t base = idx;
    ModelGraph g;
    g.name = prefix;
    while (idx < records.size() && prefix_of(records[idx].spec.name) == prefix) {
      LayerRecord& rec = records[idx];
      LayerSpec spec = rec.spec;
      if (!prefix.empty()) spec.name = spec.name.substr(prefix.size() + 1);
      for (int& p : spec.inputs) {
        p -= static_cast<int>(base);
        if (p < 0 || p >= static_cast<int>(idx - base))
          throw ModelIoError("layer input crosses graph boundary");
      }
      const int node_id = g.add(std::move(spec));
      Node& node = g.nodes[static_cast<std::size_t>(node_id)];
      if (rec.alias_target >= 0) {
        const auto [tgi, tni] = node_of_global[static_cast<std::size_t>(rec.alias_target)];
        const Node& target = tgi == graphs.size() ? g.nodes[tni] : graphs[tgi].nodes[tni];
        if (target.params.size() != node.params.size())
          throw ModelIoError("alias parameter count mismatch");
        for (std::size_t p = 0; p < node.params.size(); ++p) {
          if (target.params[p].value->shape != node.params[p].value->shape)
            throw ModelIoError("alias parameter shape mismatch");
          node.params[p].value = target.params[p].value;
          node.params[p].trainable = target.params[p].trainable;
        }
      } else {
        if (rec.params.size() != node.params.size())
          throw ModelIoError("parameter count mismatch in " + node.spec.name);
        for (std::size_t p = 0; p < node.params.size(); ++p) {
          if (rec.params[p].name != node.params[p].name ||
              rec.params[p].shape != node.params[p].value->shape)
            throw ModelIoError("parameter record mismatch in " + node.spec.name);
          node.params[p].trainable = rec.params[p].trainable;
          *node.params[p].value = rec.params[p].values;
        }
        if (rec.had_int8) g.from_quantized = true;
      }
      node_of_global.emplace_back(graphs.size(), static_cast<std::size_t>(node_id));
      ++idx;
    }
    graphs.push_back(std::move(g));
  }
  return graphs;
}

void save_model(const ModelGraph& graph, const std::filesystem::path& path,
                bool quantized) {
  const ModelGraph* g = &graph;
  const std::vector<std::uint8_t> bytes =
      serialize_models(std::span<const ModelGraph* const>(&g, 1), quantized);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelIoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelIoError("write failed: " + path.string());
}

ModelGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelIoError("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  std::vector<ModelGraph> graphs = deserialize_models(bytes);
  if (graphs.size() != 1)
    throw ModelIoError("expected a single model in " + path.string());
  return std::move(graphs.front());
}

}  // namespace hppi
