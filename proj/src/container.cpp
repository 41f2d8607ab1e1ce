#include "frz/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "frz/errors.hpp"

namespace frz {

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t((v >> 8) & 0xff));
  out.push_back(std::uint8_t((v >> 16) & 0xff));
  out.push_back(std::uint8_t((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

void put_f32le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  put_u32le(out, u);
}

float get_f32le(const std::uint8_t* p) { return std::bit_cast<float>(get_u32le(p)); }

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

constexpr char kMagic[4] = {'F', 'R', 'Z', '1'};

}  // namespace

void write_container(const std::string& path, const nlohmann::json& header,
                     const std::vector<std::uint8_t>& payload) {
  std::string hs = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(12 + hs.size() + payload.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32le(out, 1);
  put_u32le(out, std::uint32_t(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  out.insert(out.end(), payload.begin(), payload.end());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw run_error("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) throw run_error("write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw format_error("truncated container: " + path);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw format_error("bad magic, not an FRZ1 file: " + path);
  std::uint32_t version = get_u32le(bytes.data() + 4);
  if (version != 1) throw format_error("unsupported container version " + std::to_string(version));
  std::uint32_t hlen = get_u32le(bytes.data() + 8);
  if (std::size_t(hlen) + 12 > bytes.size()) throw format_error("truncated header: " + path);
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw format_error("corrupt container header: " + std::string(e.what()));
  }
  c.payload.assign(bytes.begin() + 12 + hlen, bytes.end());
  return c;
}

void TensorPack::add(const std::string& name, const Tensor& t) {
  if (index_.count(name)) throw contract_error("tensor pack: duplicate name " + name);
  Entry e;
  e.offset = std::int64_t(payload_.size());
  e.shape = t.shape;
  for (float v : t.v) put_f32le(payload_, v);
  index_.emplace(name, std::move(e));
}

Tensor TensorPack::take(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw format_error("tensor pack: missing tensor " + name);
  Tensor t(it->second.shape);
  std::int64_t need = it->second.offset + t.size() * 4;
  if (need > std::int64_t(payload_.size())) throw format_error("tensor pack: truncated payload at " + name);
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.v[std::size_t(i)] = get_f32le(payload_.data() + it->second.offset + i * 4);
  return t;
}

nlohmann::json TensorPack::index_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, e] : index_) j[name] = {{"offset", e.offset}, {"shape", e.shape}};
  return j;
}

TensorPack TensorPack::from_container(const Container& c) {
  TensorPack p;
  p.payload_ = c.payload;
  if (!c.header.contains("tensors")) throw format_error("container has no tensor index");
  for (auto it = c.header.at("tensors").begin(); it != c.header.at("tensors").end(); ++it) {
    Entry e;
    e.offset = it.value().at("offset").get<std::int64_t>();
    e.shape = it.value().at("shape").get<Shape>();
    if (e.offset < 0) throw format_error("tensor pack: negative offset");
    p.index_.emplace(it.key(), std::move(e));
  }
  return p;
}

void write_container(const std::string& path, nlohmann::json header, const TensorPack& pack) {
  header["tensors"] = pack.index_json();
  write_container(path, header, pack.payload());
}

nlohmann::json layers_to_json(const std::vector<LayerSpec>& spec) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LayerSpec& l : spec) {
    nlohmann::json j;
    j["kind"] = l.kind_name();
    switch (l.kind) {
      case LayerSpec::Kind::Dense:
        j["in"] = l.in_features;
        j["out"] = l.out_features;
        break;
      case LayerSpec::Kind::Conv2d:
        j["in_channels"] = l.in_channels;
        j["out_channels"] = l.out_channels;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        break;
      case LayerSpec::Kind::Norm:
        j["channels"] = l.channels;
        break;
      default:
        break;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<LayerSpec> layers_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw config_error("network.layers must be an array");
  std::vector<LayerSpec> spec;
  for (const auto& e : j) {
    std::string kind = e.at("kind").get<std::string>();
    if (kind == "dense") {
      spec.push_back(LayerSpec::dense(e.at("in").get<int>(), e.at("out").get<int>()));
    } else if (kind == "conv2d") {
      spec.push_back(LayerSpec::conv2d(e.at("in_channels").get<int>(), e.at("out_channels").get<int>(),
                                       e.at("kernel").get<int>(), e.value("stride", 1),
                                       e.value("padding", 0)));
    } else if (kind == "norm") {
      spec.push_back(LayerSpec::norm(e.at("channels").get<int>()));
    } else if (kind == "relu") {
      spec.push_back(LayerSpec::relu());
    } else if (kind == "flatten") {
      spec.push_back(LayerSpec::flatten());
    } else {
      throw config_error("unknown layer kind '" + kind + "'");
    }
  }
  return spec;
}

nlohmann::json units_to_json(const std::vector<FreezeUnit>& units) {
  nlohmann::json arr = nlohmann::json::array();
  for (const FreezeUnit& u : units) arr.push_back({{"id", u.unit_id}, {"layers", u.layer_indices}});
  return arr;
}

std::vector<FreezeUnit> units_from_json(const nlohmann::json& j) {
  std::vector<FreezeUnit> units;
  for (const auto& e : j) {
    FreezeUnit u;
    u.unit_id = e.at("id").get<int>();
    u.layer_indices = e.at("layers").get<std::vector<int>>();
    units.push_back(std::move(u));
  }
  return units;
}

void save_checkpoint(const NetworkState& state, const std::string& path) {
  TensorPack pack;
  for (const FreezeUnit& u : state.units) {
    std::string base = "unit" + std::to_string(u.unit_id);
    auto ps = unit_tensor_list(state.params[u.unit_id]);
    auto ms = unit_tensor_list(state.momentum[u.unit_id]);
    const char* names[4] = {".weight", ".bias", ".gamma", ".beta"};
    for (std::size_t i = 0; i < ps.size(); ++i) {
      pack.add(base + names[i], *ps[i]);
      pack.add(base + names[i] + ".m", *ms[i]);
    }
  }
  nlohmann::json header;
  header["kind"] = "checkpoint";
  header["spec"] = layers_to_json(state.spec);
  header["units"] = units_to_json(state.units);
  header["seed"] = state.seed;
  header["input_shape"] = state.input_shape;
  write_container(path, header, pack);
}

NetworkState load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.header.value("kind", "") != "checkpoint") throw format_error("not a checkpoint file: " + path);
  std::vector<LayerSpec> spec;
  std::vector<FreezeUnit> units;
  Shape input_shape;
  std::uint64_t seed = 0;
  try {
    spec = layers_from_json(c.header.at("spec"));
    units = units_from_json(c.header.at("units"));
    input_shape = c.header.at("input_shape").get<Shape>();
    seed = c.header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error("corrupt checkpoint header: " + std::string(e.what()));
  }
  NetworkState st = build_network(spec, units, seed, input_shape);
  TensorPack pack = TensorPack::from_container(c);
  for (const FreezeUnit& u : st.units) {
    std::string base = "unit" + std::to_string(u.unit_id);
    auto ps = unit_tensor_list(st.params[u.unit_id]);
    auto ms = unit_tensor_list(st.momentum[u.unit_id]);
    const char* names[4] = {".weight", ".bias", ".gamma", ".beta"};
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Tensor t = pack.take(base + names[i]);
      if (t.shape != ps[i]->shape) throw format_error("checkpoint tensor shape mismatch at " + base + names[i]);
      *ps[i] = std::move(t);
      Tensor m = pack.take(base + names[i] + ".m");
      if (m.shape != ms[i]->shape) throw format_error("checkpoint tensor shape mismatch at " + base + names[i]);
      *ms[i] = std::move(m);
    }
  }
  return st;
}

void save_dataset(const DatasetFile& ds, const std::string& path) {
  std::vector<std::uint8_t> payload;
  for (const TrainRecord& r : ds.records) {
    if (r.sequence.empty() || int(r.sequence.size()) > ds.window)
      throw contract_error("dataset record sequence length outside [1, window]");
    if (r.sequence.size() > 0xffff) throw contract_error("dataset record sequence too long for u16");
    put_u16le(payload, std::uint16_t(r.sequence.size()));
    for (const auto& snap : r.sequence) {
      if (int(snap.size()) != ds.tailored_size)
        throw contract_error("dataset record snapshot length != tailored_size");
      for (float v : snap) put_f32le(payload, v);
    }
    payload.push_back(r.label);
  }
  nlohmann::json header;
  header["kind"] = "dataset";
  header["window"] = ds.window;
  header["tailored_size"] = ds.tailored_size;
  header["count"] = ds.records.size();
  header["provenance"] = ds.provenance;
  write_container(path, header, payload);
}

DatasetFile load_dataset(const std::string& path) {
  Container c = read_container(path);
  if (c.header.value("kind", "") != "dataset") throw format_error("not a dataset file: " + path);
  DatasetFile ds;
  std::size_t count = 0;
  try {
    ds.window = c.header.at("window").get<int>();
    ds.tailored_size = c.header.at("tailored_size").get<int>();
    ds.provenance = c.header.value("provenance", "");
    count = c.header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error("corrupt dataset header: " + std::string(e.what()));
  }
  const std::uint8_t* p = c.payload.data();
  std::size_t left = c.payload.size();
  for (std::size_t i = 0; i < count; ++i) {
    if (left < 2) throw format_error("truncated dataset record " + std::to_string(i));
    std::uint16_t len = std::uint16_t(p[0] | (std::uint16_t(p[1]) << 8));
    p += 2;
    left -= 2;
    if (len < 1 || int(len) > ds.window) throw format_error("dataset record length out of range");
    std::size_t need = std::size_t(len) * std::size_t(ds.tailored_size) * 4 + 1;
    if (left < need) throw format_error("truncated dataset record " + std::to_string(i));
    TrainRecord r;
    r.sequence.resize(len);
    for (int s = 0; s < int(len); ++s) {
      r.sequence[std::size_t(s)].resize(std::size_t(ds.tailored_size));
      for (int k = 0; k < ds.tailored_size; ++k) {
        r.sequence[std::size_t(s)][std::size_t(k)] = get_f32le(p);
        p += 4;
      }
    }
    r.label = *p++;
    if (r.label > 1) throw format_error("dataset record label out of range");
    left -= need;
    ds.records.push_back(std::move(r));
  }
  if (left != 0) throw format_error("dataset payload has trailing bytes");
  return ds;
}

}  // namespace frz
