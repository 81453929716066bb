#include "crpl/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace crpl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'R', 'P', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(const std::string& buf, std::size_t& off) {
  check_runtime(off + 4 <= buf.size(), "checkpoint truncated");
  std::uint32_t v;
  std::memcpy(&v, buf.data() + off, 4);
  off += 4;
  return v;
}

std::uint32_t crc_of(const std::string& payload) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
}

struct Parsed {
  ModelConfig config;
  std::map<std::string, Tensor<float>> tensors;
};

Parsed parse_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check_runtime(in.good(), "cannot open checkpoint ", path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  check_runtime(buf.size() >= 12, "checkpoint too short: ", path.string());
  check_runtime(std::memcmp(buf.data(), kMagic, 4) == 0, "bad checkpoint magic in ",
                path.string());
  std::size_t off = 4;
  const std::uint32_t version = get_u32(buf, off);
  check_runtime(version == kVersion, "unknown checkpoint version ", version, " in ",
                path.string());

  const std::string payload = buf.substr(8, buf.size() - 12);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  check_runtime(crc_of(payload) == stored_crc, "checkpoint CRC mismatch in ", path.string());

  const std::uint32_t config_len = get_u32(buf, off);
  check_runtime(off + config_len <= buf.size() - 4, "checkpoint truncated");
  Parsed p;
  p.config = model_config_from_json(nlohmann::json::parse(buf.substr(off, config_len)));
  off += config_len;

  const std::uint32_t count = get_u32(buf, off);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = get_u32(buf, off);
    check_runtime(off + name_len <= buf.size() - 4, "checkpoint truncated");
    std::string name = buf.substr(off, name_len);
    off += name_len;
    const std::uint32_t ndim = get_u32(buf, off);
    std::vector<std::int64_t> shape;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<std::int64_t>(get_u32(buf, off)));
      numel *= shape.back();
    }
    check_runtime(off + static_cast<std::size_t>(numel) * 4 <= buf.size() - 4,
                  "checkpoint truncated");
    std::vector<float> data(static_cast<std::size_t>(numel));
    std::memcpy(data.data(), buf.data() + off, static_cast<std::size_t>(numel) * 4);
    off += static_cast<std::size_t>(numel) * 4;
    check_runtime(p.tensors.emplace(std::move(name), Tensor<float>(shape, std::move(data))).second,
                  "duplicate tensor name in checkpoint ", path.string());
  }
  check_runtime(off == buf.size() - 4, "trailing bytes in checkpoint ", path.string());
  return p;
}

void assign_tensors(Model<float>& model, Parsed& p, const std::filesystem::path& path,
                    bool skip_head) {
  std::size_t used = 0;
  auto assign = [&](const std::string& name, Tensor<float>& dst) {
    if (skip_head && (name == "fc.weight" || name == "fc.bias")) {
      ++used;  // present in the file but deliberately not loaded
      check_runtime(p.tensors.count(name) == 1, "checkpoint ", path.string(), " missing tensor ",
                    name);
      return;
    }
    auto it = p.tensors.find(name);
    check_runtime(it != p.tensors.end(), "checkpoint ", path.string(), " missing tensor ", name);
    check_runtime(it->second.shape() == dst.shape(), "checkpoint ", path.string(), " tensor ",
                  name, " has shape ", shape_str(it->second), ", skeleton expects ",
                  shape_str(dst));
    dst = std::move(it->second);
    ++used;
  };
  for (std::size_t i = 0; i < model.param_names.size(); ++i)
    assign(model.param_names[i], model.param_values[i]);
  for (std::size_t i = 0; i < model.buffer_names.size(); ++i)
    assign(model.buffer_names[i], model.buffer_values[i]);
  check_runtime(used == p.tensors.size(), "checkpoint ", path.string(), " carries ",
                p.tensors.size() - used, " tensor(s) the skeleton does not expect");
}

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  std::string payload;
  const std::string config = model_config_to_json(model.config).dump();
  put_u32(payload, static_cast<std::uint32_t>(config.size()));
  payload += config;
  put_u32(payload,
          static_cast<std::uint32_t>(model.param_names.size() + model.buffer_names.size()));
  auto put_tensor = [&](const std::string& name, const Tensor<float>& t) {
    put_u32(payload, static_cast<std::uint32_t>(name.size()));
    payload += name;
    put_u32(payload, static_cast<std::uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) put_u32(payload, static_cast<std::uint32_t>(t.dim(d)));
    payload.append(reinterpret_cast<const char*>(t.data()),
                   static_cast<std::size_t>(t.numel()) * 4);
  };
  for (std::size_t i = 0; i < model.param_names.size(); ++i)
    put_tensor(model.param_names[i], model.param_values[i]);
  for (std::size_t i = 0; i < model.buffer_names.size(); ++i)
    put_tensor(model.buffer_names[i], model.buffer_values[i]);

  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "cannot write checkpoint ", path.string());
  out.write(kMagic, 4);
  std::uint32_t v = kVersion;
  out.write(reinterpret_cast<const char*>(&v), 4);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint32_t crc = crc_of(payload);
  out.write(reinterpret_cast<const char*>(&crc), 4);
  check_runtime(out.good(), "write failed for checkpoint ", path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  Parsed p = parse_checkpoint(path);
  Model<float> model = Model<float>::build(p.config, 0);
  assign_tensors(model, p, path, false);
  return model;
}

Model<float> load_for_finetune(const std::filesystem::path& path, int new_num_outputs,
                               std::uint64_t head_init_seed) {
  Parsed p = parse_checkpoint(path);
  const bool replace_head = p.config.num_outputs != new_num_outputs;
  ModelConfig cfg = p.config;
  cfg.num_outputs = new_num_outputs;
  Model<float> model = Model<float>::build(cfg, head_init_seed);
  assign_tensors(model, p, path, replace_head);
  return model;
}

}  // namespace crpl
