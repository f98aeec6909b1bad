#include "stockode/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "stockode/errors.hpp"

namespace stockode {

namespace {

constexpr char kMagic[8] = {'S', 'O', 'D', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_tensor_data(std::ostream& out, const Tensor& t) {
  for (double v : t.data()) write_f64(out, v);
}

void read_tensor_data(std::istream& in, Tensor& t) {
  for (double& v : t.data()) v = read_f64(in);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, StockOde& model,
                     const AdamState& adam, const CheckpointInfo& info) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());

  out.write(kMagic, 8);
  write_u32(out, kFormatVersion);
  const std::string config_json = info.config.to_json();
  write_u64(out, config_json.size());
  out.write(config_json.data(), std::streamsize(config_json.size()));
  write_u64(out, info.epoch);
  write_u64(out, info.rng_seed);
  write_u64(out, info.noise_counter);
  write_u64(out, info.pair_counter);
  write_u64(out, std::uint64_t(adam.step_count));

  const auto& params = model.parameters();
  write_u32(out, std::uint32_t(params.size()));
  for (const Parameter* p : params) {
    write_u32(out, std::uint32_t(p->name.size()));
    out.write(p->name.data(), std::streamsize(p->name.size()));
    write_u32(out, std::uint32_t(p->value.rank()));
    for (std::size_t d : p->value.shape()) write_u64(out, d);
    write_tensor_data(out, p->value);
  }
  for (const Parameter* p : params) {
    auto it = adam.moments.find(p);
    if (it == adam.moments.end() || it->second.m.size() == 0) {
      write_u32(out, 0);
    } else {
      write_u32(out, 1);
      write_tensor_data(out, it->second.m);
      write_tensor_data(out, it->second.v);
    }
  }
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) {
    throw ConfigError("checkpoint format version " + std::to_string(version) +
                      " is not supported");
  }
  CheckpointInfo info;
  const std::uint64_t json_len = read_u64(in);
  std::string json_text(json_len, '\0');
  in.read(json_text.data(), std::streamsize(json_len));
  if (!in) throw DataError("checkpoint: truncated config");
  info.config = ModelConfig::from_json(json_text);
  info.epoch = read_u64(in);
  info.rng_seed = read_u64(in);
  info.noise_counter = read_u64(in);
  info.pair_counter = read_u64(in);
  return info;
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path,
                               StockOde& model, AdamState& adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  in.seekg(8);  // magic verified by read_checkpoint_info
  CheckpointInfo info;
  {
    const std::uint32_t version = read_u32(in);
    if (version != kFormatVersion) {
      throw ConfigError("checkpoint format version " +
                        std::to_string(version) + " is not supported");
    }
    const std::uint64_t json_len = read_u64(in);
    std::string json_text(json_len, '\0');
    in.read(json_text.data(), std::streamsize(json_len));
    info.config = ModelConfig::from_json(json_text);
  }
  info.epoch = read_u64(in);
  info.rng_seed = read_u64(in);
  info.noise_counter = read_u64(in);
  info.pair_counter = read_u64(in);
  adam.step_count = long(read_u64(in));
  adam.lr = info.config.lr;

  auto& params = model.parameters();
  const std::uint32_t n_params = read_u32(in);
  if (n_params != params.size()) {
    throw ConfigError("incompatible checkpoint: expected " +
                      std::to_string(params.size()) + " parameters, found " +
                      std::to_string(n_params));
  }
  for (Parameter* p : params) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), std::streamsize(name_len));
    if (name != p->name) {
      throw ConfigError("incompatible checkpoint: parameter '" + name +
                        "' where '" + p->name + "' was expected");
    }
    const std::uint32_t rank = read_u32(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u64(in);
    if (shape != p->value.shape()) {
      throw ConfigError("incompatible checkpoint: shape mismatch for '" +
                        name + "'");
    }
    read_tensor_data(in, p->value);
    p->zero_grad();
  }
  adam.moments.clear();
  for (Parameter* p : params) {
    const std::uint32_t present = read_u32(in);
    if (present) {
      auto& mo = adam.moments[p];
      mo.m = Tensor(p->value.shape());
      mo.v = Tensor(p->value.shape());
      read_tensor_data(in, mo.m);
      read_tensor_data(in, mo.v);
    }
  }
  if (!in) throw DataError("checkpoint: truncated tensors");
  return info;
}

}  // namespace stockode
