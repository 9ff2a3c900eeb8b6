#include "gridcal/checkpoint.hpp"

#include "gridcal/error.hpp"
#include "gridcal/models.hpp"
#include "gridcal/tensor_io.hpp"

#include <map>
#include <sstream>

namespace gridcal {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  auto p = stem;
  p += suffix;
  return p;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

RawTensor to_raw(const Parameter& p) {
  RawTensor raw;
  raw.dtype = DType::F32;
  for (std::size_t d : p.shape) raw.dims.push_back(static_cast<std::uint32_t>(d));
  raw.f32.assign(p.value.begin(), p.value.end());
  return raw;
}

struct Entry {
  std::string shape;
  std::size_t offset = 0;
};

void load_into(const std::vector<Parameter*>& params, const std::map<std::string, Entry>& entries,
               std::span<const std::uint8_t> blob, const std::string& what) {
  if (entries.size() != params.size()) {
    throw FormatError("checkpoint lists " + std::to_string(entries.size()) + " " + what + "s, model has " +
                      std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end()) throw FormatError("checkpoint is missing " + what + " " + p->name);
    if (it->second.shape != shape_string(p->shape)) {
      throw ShapeError(p->name + ": checkpoint shape " + it->second.shape + ", model shape " +
                       shape_string(p->shape));
    }
    if (it->second.offset > blob.size()) throw TruncationError(p->name + ": offset beyond end of data");
    std::size_t consumed = 0;
    const RawTensor raw = decode_tensor(blob.subspan(it->second.offset), consumed);
    if (raw.dtype != DType::F32 || raw.f32.size() != p->size()) {
      throw FormatError(p->name + ": stored tensor does not match the manifest");
    }
    p->value.assign(raw.f32.begin(), raw.f32.end());
  }
}

} // namespace

void save_predictor(const Predictor& model, const std::filesystem::path& stem) {
  std::ostringstream manifest;
  manifest << "kind " << model.kind() << '\n';
  for (const auto& [key, value] : model.config()) manifest << "config " << key << ' ' << value << '\n';

  std::vector<std::uint8_t> blob;
  auto emit = [&](const char* tag, const std::vector<const Parameter*>& params) {
    for (const Parameter* p : params) {
      manifest << tag << ' ' << p->name << ' ' << shape_string(p->shape) << ' ' << blob.size() << '\n';
      encode_tensor(to_raw(*p), blob);
    }
  };
  emit("param", model.parameters());
  emit("buffer", model.buffers());
  write_file_bytes(with_suffix(stem, ".bin"), blob);
  write_text_file(with_suffix(stem, ".manifest"), manifest.str());
}

std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& stem) {
  std::istringstream in(read_text_file(with_suffix(stem, ".manifest")));
  std::string kind;
  std::map<std::string, std::string> config;
  std::map<std::string, Entry> params, buffers;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      ls >> kind;
    } else if (tag == "config") {
      std::string key, value;
      ls >> key >> value;
      config[key] = value;
    } else if (tag == "param" || tag == "buffer") {
      std::string name;
      Entry e;
      if (!(ls >> name >> e.shape >> e.offset)) throw FormatError("malformed manifest line: " + line);
      (tag == "param" ? params : buffers)[name] = e;
    } else {
      throw FormatError("unknown manifest entry: " + line);
    }
  }
  if (kind.empty()) throw FormatError(with_suffix(stem, ".manifest").string() + ": no model kind");
  auto model = make_predictor(kind, config);
  const auto blob = read_file_bytes(with_suffix(stem, ".bin"));
  load_into(model->parameters(), params, blob, "param");
  load_into(model->buffers(), buffers, blob, "buffer");
  return model;
}

void save_ensemble(const EnsembleModel& ens, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream seeds;
  for (std::size_t m = 0; m < ens.size(); ++m) {
    save_predictor(*ens.members[m], dir / ("member_" + std::to_string(m)));
    seeds << ens.member_seeds[m] << '\n';
  }
  write_text_file(dir / "members", seeds.str());
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  std::istringstream in(read_text_file(dir / "members"));
  EnsembleModel ens;
  std::uint64_t seed = 0;
  while (in >> seed) {
    ens.members.push_back(load_predictor(dir / ("member_" + std::to_string(ens.member_seeds.size()))));
    ens.member_seeds.push_back(seed);
  }
  if (ens.members.empty()) throw FormatError(dir.string() + ": ensemble has no members");
  return ens;
}

void round_to_storage(Predictor& model) {
  auto round = [](const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
      for (double& v : p->value) v = static_cast<double>(static_cast<float>(v));
    }
  };
  round(model.parameters());
  round(model.buffers());
}

} // namespace gridcal
