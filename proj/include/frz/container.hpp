#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "frz/layers.hpp"
#include "frz/network.hpp"
#include "frz/predictor.hpp"
#include "frz/tensor.hpp"

namespace frz {

// FRZ1 binary container: magic "FRZ1", u32 LE version (=1), u32 LE header
// length, UTF-8 JSON header, raw payload. Checkpoints (.frz), predictors
// (.frzp) and datasets (.frzd) all live in this envelope and differ only in
// the header's "kind" and payload layout.
struct Container {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

void write_container(const std::string& path, const nlohmann::json& header,
                     const std::vector<std::uint8_t>& payload);
Container read_container(const std::string& path);

// Named float32 tensors packed back to back, with a JSON index of
// name -> {offset, shape}. Offsets are bytes into the payload.
class TensorPack {
 public:
  void add(const std::string& name, const Tensor& t);
  Tensor take(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  nlohmann::json index_json() const;
  const std::vector<std::uint8_t>& payload() const { return payload_; }
  static TensorPack from_container(const Container& c);

 private:
  struct Entry {
    std::int64_t offset = 0;
    Shape shape;
  };
  std::map<std::string, Entry> index_;
  std::vector<std::uint8_t> payload_;
};

void write_container(const std::string& path, nlohmann::json header, const TensorPack& pack);

// JSON forms of the network structure, shared by checkpoints and configs.
nlohmann::json layers_to_json(const std::vector<LayerSpec>& spec);
std::vector<LayerSpec> layers_from_json(const nlohmann::json& j);
nlohmann::json units_to_json(const std::vector<FreezeUnit>& units);
std::vector<FreezeUnit> units_from_json(const nlohmann::json& j);

// Full network checkpoint (parameters + momentum), kind="checkpoint".
void save_checkpoint(const NetworkState& state, const std::string& path);
NetworkState load_checkpoint(const std::string& path);

// Predictor training dataset, kind="dataset". Records are stored as
// (u16 LE sequence length, length x tailored_size f32 LE, u8 label).
struct DatasetFile {
  int window = 0;
  int tailored_size = 0;
  std::string provenance;
  std::vector<TrainRecord> records;
};

void save_dataset(const DatasetFile& ds, const std::string& path);
DatasetFile load_dataset(const std::string& path);

}  // namespace frz
