#include "contrastlab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "contrastlab/errors.hpp"

namespace fs = std::filesystem;

namespace contrastlab {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

constexpr std::array<char, 8> kMagic{'C', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::vector<Tensor*> all_tensors(Model& model) {
  std::vector<Tensor*> out;
  for (Parameter* p : model.parameters()) out.push_back(&p->value);
  for (Tensor* b : model.buffers()) out.push_back(b);
  return out;
}

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw DataIntegrityError("checkpoint blob truncated: " + path);
  }
  return value;
}

}  // namespace

std::string save_checkpoint(Model& model, int epoch, const std::string& run_id, const std::string& dir,
                            const std::string& stem) {
  const fs::path blob = fs::path(dir) / (stem + ".bin");
  const fs::path sidecar = fs::path(dir) / (stem + ".json");
  const auto tensors = all_tensors(model);
  {
    std::ofstream out(blob, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint", blob.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, tensors.size());
    for (const Tensor* t : tensors) {
      put<std::uint64_t>(out, t->size());
      out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
    }
    if (!out.flush()) throw IoError("error writing checkpoint", blob.string());
  }

  Json j;
  j["format"] = kCheckpointFormat;
  j["model"] = to_json(model.spec());
  j["epoch"] = epoch;
  j["run_id"] = run_id;
  j["blob"] = blob.filename().string();
  j["parameter_count"] = model.parameter_count();
  Json list = Json::array();
  for (Parameter* p : model.parameters()) list.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  std::size_t b = 0;
  for (Tensor* t : model.buffers()) list.push_back({{"name", "buffer." + std::to_string(b++)}, {"shape", t->shape()}});
  j["tensors"] = std::move(list);
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint sidecar", sidecar.string());
  out << j.dump(2) << '\n';
  if (!out.flush()) throw IoError("error writing checkpoint sidecar", sidecar.string());
  return sidecar.string();
}

CheckpointInfo read_checkpoint_info(const std::string& sidecar_path) {
  std::ifstream in(sidecar_path);
  if (!in) throw IoError("cannot open checkpoint", sidecar_path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError("checkpoint sidecar is not valid JSON: " + sidecar_path);
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw DataIntegrityError("not a " + std::string(kCheckpointFormat) + " sidecar: " + sidecar_path);
  }
  CheckpointInfo info;
  try {
    info.spec = model_spec_from_json(j.at("model"));
    info.epoch = j.at("epoch").get<int>();
    info.run_id = j.at("run_id").get<std::string>();
    info.blob_path = (fs::path(sidecar_path).parent_path() / j.at("blob").get<std::string>()).string();
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError("checkpoint sidecar " + sidecar_path + ": " + e.what());
  }
  info.sidecar_path = sidecar_path;
  return info;
}

Model load_checkpoint(const std::string& sidecar_path, CheckpointInfo* info_out) {
  const CheckpointInfo info = read_checkpoint_info(sidecar_path);
  Model model(info.spec, 0);
  const auto tensors = all_tensors(model);

  std::ifstream in(info.blob_path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint blob", info.blob_path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataIntegrityError("bad checkpoint magic: " + info.blob_path);
  if (get<std::uint32_t>(in, info.blob_path) != kVersion) {
    throw DataIntegrityError("unsupported checkpoint version: " + info.blob_path);
  }
  if (get<std::uint64_t>(in, info.blob_path) != tensors.size()) {
    throw DataIntegrityError("checkpoint tensor count does not match the model spec: " + info.blob_path);
  }
  for (Tensor* t : tensors) {
    if (get<std::uint64_t>(in, info.blob_path) != t->size()) {
      throw DataIntegrityError("checkpoint tensor size does not match the model spec: " + info.blob_path);
    }
    if (!in.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)))) {
      throw DataIntegrityError("checkpoint blob truncated: " + info.blob_path);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataIntegrityError("trailing bytes in checkpoint blob: " + info.blob_path);
  }
  if (info_out) *info_out = info;
  return model;
}

}  // namespace contrastlab
