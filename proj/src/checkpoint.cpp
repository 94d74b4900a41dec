#include "neat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "neat/errors.hpp"

namespace neat {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'N', 'E', 'A', 'T', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

json shape(const Matrix& m) { return json::array({m.rows(), m.cols()}); }

// Reads from an in-memory image, failing with IntegrityError on overrun.
class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <class T>
  T take(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > end_ - pos_) throw IntegrityError(std::string("checkpoint truncated while reading ") + what);
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

Matrix read_matrix(Reader& in, const json& dims, const std::string& what) {
  if (!dims.is_array() || dims.size() != 2 || !dims[0].is_number_unsigned() || !dims[1].is_number_unsigned())
    throw IntegrityError("checkpoint shape table: bad shape for " + what);
  const auto rows = dims[0].get<std::uint64_t>();
  const auto cols = dims[1].get<std::uint64_t>();
  if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
    throw IntegrityError("checkpoint shape table: implausible shape for " + what);
  if (rows * cols > in.remaining() / sizeof(double))
    throw IntegrityError("checkpoint truncated: payload too short for " + what);
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = in.take<double>(what.c_str());
  return Matrix(rows, cols, std::move(values));
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const train::AdaptedModel& model = checkpoint.model;
  json layers = json::array();
  std::vector<const Matrix*> payload;
  for (const auto& layer : model.layers) {
    json entry = {{"index", layer.layer_index}, {"weight", shape(layer.base.weight)}, {"adapter", nullptr}};
    payload.push_back(&layer.base.weight);
    if (layer.adapter) {
      json params = json::array();
      for (const Matrix* p : parameters(*layer.adapter)) {
        params.push_back(shape(*p));
        payload.push_back(p);
      }
      if (const auto* n = std::get_if<NeatAdapter>(&*layer.adapter)) {
        entry["adapter"] = {{"kind", "neat"},
                            {"activation", std::string(ad::to_string(n->activation))},
                            {"scaling", n->scaling},
                            {"residual", n->residual},
                            {"dropout", n->dropout_p},
                            {"output_activation", n->output_activation},
                            {"params", params}};
      } else {
        const auto& l = std::get<LoraAdapter>(*layer.adapter);
        entry["adapter"] = {{"kind", "lora"}, {"scaling", l.scaling}, {"dropout", l.dropout_p}, {"params", params}};
      }
    }
    layers.push_back(entry);
  }
  json header = {{"seed", checkpoint.seed},
                 {"note", checkpoint.note},
                 {"hidden_activation", model.hidden_activation
                                           ? json(std::string(ad::to_string(*model.hidden_activation)))
                                           : json(nullptr)},
                 {"layers", layers}};
  const std::string text = header.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  put<std::uint32_t>(bytes, kCheckpointVersion);
  put<std::uint64_t>(bytes, text.size());
  bytes += text;
  for (const Matrix* m : payload)
    for (double v : m->values()) put<double>(bytes, v);
  put<std::uint64_t>(bytes, fnv1a(bytes.data(), bytes.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IntegrityError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IntegrityError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError("'" + path + "' is not a checkpoint (bad magic)");
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t))
    throw IntegrityError("checkpoint truncated while reading the format version");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (this build reads " +
                       std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + 2 * sizeof(std::uint64_t))
    throw IntegrityError("checkpoint truncated (no room for header and checksum)");

  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  Reader in(bytes, body);
  in.take_string(sizeof(kMagic), "magic");
  in.take<std::uint32_t>("version");
  const auto header_len = in.take<std::uint64_t>("header length");
  if (header_len > in.remaining()) throw IntegrityError("checkpoint truncated inside the header");
  json header;
  try {
    header = json::parse(in.take_string(header_len, "header"));
  } catch (const json::parse_error&) {
    throw IntegrityError("checkpoint header is not valid JSON");
  }

  Checkpoint ck;
  try {
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.note = header.at("note").get<std::string>();
    const json& act = header.at("hidden_activation");
    ck.model.hidden_activation =
        act.is_null() ? std::nullopt : std::optional<ad::Activation>(ad::parse_activation(act.get<std::string>()));
    for (const json& entry : header.at("layers")) {
      AdaptedLayer layer;
      layer.layer_index = entry.at("index").get<std::size_t>();
      const std::string tag = "layer " + std::to_string(layer.layer_index);
      layer.base.weight = read_matrix(in, entry.at("weight"), tag + " weight");
      const json& a = entry.at("adapter");
      if (!a.is_null()) {
        const json& params = a.at("params");
        std::vector<Matrix> mats;
        for (std::size_t k = 0; k < params.size(); ++k)
          mats.push_back(read_matrix(in, params[k], tag + " adapter parameter " + std::to_string(k)));
        const std::string kind = a.at("kind").get<std::string>();
        if (kind == "neat") {
          if (mats.size() < 2) throw IntegrityError(tag + ": NEAT adapter needs at least two parameters");
          NeatAdapter n;
          n.theta_in = mats.front();
          n.theta_out = mats.back();
          n.intermediates.assign(mats.begin() + 1, mats.end() - 1);
          n.activation = ad::parse_activation(a.at("activation").get<std::string>());
          n.scaling = a.at("scaling").get<double>();
          n.residual = a.at("residual").get<bool>();
          n.dropout_p = a.at("dropout").get<double>();
          n.output_activation = a.at("output_activation").get<bool>();
          layer.adapter = std::move(n);
        } else if (kind == "lora") {
          if (mats.size() != 2) throw IntegrityError(tag + ": LoRA adapter needs exactly two parameters");
          layer.adapter = LoraAdapter{mats[0], mats[1], a.at("scaling").get<double>(), a.at("dropout").get<double>()};
        } else {
          throw IntegrityError(tag + ": unknown adapter kind '" + kind + "'");
        }
        check_compatible(layer.base, *layer.adapter);
      }
      ck.model.layers.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ShapeError& e) {
    throw IntegrityError(std::string("checkpoint shape table is inconsistent: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint header is malformed: ") + e.what());
  }
  if (in.remaining() != 0)
    throw IntegrityError("checkpoint has " + std::to_string(in.remaining()) + " unexpected bytes after the payload");

  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != fnv1a(bytes.data(), body)) throw IntegrityError("checkpoint checksum mismatch");
  return ck;
}

std::string checkpoint_summary(const Checkpoint& ck) {
  std::ostringstream os;
  os << "checkpoint format v" << kCheckpointVersion << ", seed " << ck.seed;
  if (!ck.note.empty()) os << ", " << ck.note;
  os << "\n";
  os << "hidden activation: "
     << (ck.model.hidden_activation ? std::string(ad::to_string(*ck.model.hidden_activation)) : "none") << "\n";
  std::size_t trainable = 0;
  for (const auto& layer : ck.model.layers) {
    os << "layer " << layer.layer_index << ": W0 " << layer.base.weight.shape_string();
    if (!layer.adapter) {
      os << ", no adapter\n";
      continue;
    }
    trainable += param_count(*layer.adapter);
    if (const auto* n = std::get_if<NeatAdapter>(&*layer.adapter)) {
      os << ", neat r=" << n->hidden() << " depth=" << n->depth() << " " << ad::to_string(n->activation)
         << " s=" << n->scaling << (n->residual ? " residual" : "") << (n->output_activation ? " out-act" : "");
    } else {
      const auto& l = std::get<LoraAdapter>(*layer.adapter);
      os << ", lora r=" << l.rank() << " s=" << l.scaling;
    }
    os << ", " << param_count(*layer.adapter) << " trainable\n";
  }
  os << "total trainable parameters: " << trainable << "\n";
  return os.str();
}

}  // namespace neat
