#include "diflow/checkpoint.hpp"

#include <map>

#include "diflow/binary_io.hpp"
#include "diflow/config.hpp"
#include "diflow/errors.hpp"

namespace diflow {

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'F', 'C', 'K'};

void write_tensor(ByteWriter& w, const std::string& name, const nn::Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  for (double x : t.data()) w.f64(x);
}

void verify_crc(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint: truncated");
  ByteReader tail(bytes.subspan(bytes.size() - 4), "checkpoint");
  if (tail.u32() != crc32_of(bytes.first(bytes.size() - 4))) {
    throw FormatError("checkpoint: checksum mismatch (file corrupted or truncated)");
  }
}

CheckpointInfo read_header(ByteReader& r) {
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError("checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  CheckpointInfo info;
  info.config_hash = r.u64();
  const std::string model_json = r.str();
  try {
    info.model = model_config_from_json(nlohmann::json::parse(model_json));
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: bad model config: ") + e.what());
  }
  if (config_hash(info.model) != info.config_hash) {
    throw FormatError("checkpoint: stored config hash does not match its config");
  }
  info.run_config_json = r.str();
  info.step = r.u64();
  return info;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const DiFlowModel& model,
                                               const nn::Adam* optimizer,
                                               const std::string& run_config_json) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(config_hash(model.config()));
  w.str(to_json(model.config()).dump());
  w.str(run_config_json);
  w.u64(optimizer ? optimizer->step_count() : 0);
  const auto& params = model.parameters();
  const std::size_t count = params.size() * (optimizer ? 3 : 1);
  w.u32(static_cast<std::uint32_t>(count));
  for (const auto* p : params) write_tensor(w, p->name(), p->value());
  if (optimizer) {
    const nn::Adam& opt = *optimizer;
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_tensor(w, "adam.m:" + params[i]->name(), opt.first_moments()[i]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_tensor(w, "adam.v:" + params[i]->name(), opt.second_moments()[i]);
    }
  }
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return w.buffer();
}

CheckpointInfo inspect_checkpoint(std::span<const std::uint8_t> bytes) {
  verify_crc(bytes);
  ByteReader r(bytes.first(bytes.size() - 4), "checkpoint");
  return read_header(r);
}

CheckpointInfo load_checkpoint(std::span<const std::uint8_t> bytes, DiFlowModel& model,
                               nn::Adam* optimizer) {
  verify_crc(bytes);
  ByteReader r(bytes.first(bytes.size() - 4), "checkpoint");
  CheckpointInfo info = read_header(r);
  if (info.config_hash != config_hash(model.config())) {
    throw FormatError("checkpoint: config hash mismatch (checkpoint was trained with a "
                      "different model configuration)");
  }
  std::map<std::string, nn::Tensor> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: tensor '" + name + "' has rank > 8");
    nn::Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.u64());
      numel *= d;
    }
    if (numel > r.remaining() / 8) {
      throw FormatError("checkpoint: tensor '" + name + "' exceeds file size at byte offset " +
                        std::to_string(r.offset()));
    }
    nn::Tensor t(shape);
    for (auto& x : t.data()) x = r.f64();
    tensors.emplace(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");

  auto fetch = [&](const std::string& name, const nn::Shape& shape) -> const nn::Tensor& {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                        nn::shape_string(it->second.shape()) + ", expected " +
                        nn::shape_string(shape));
    }
    return it->second;
  };
  const auto& params = model.parameters();
  // Validate everything before mutating the model.
  for (const auto* p : params) fetch(p->name(), p->value().shape());
  if (optimizer) {
    for (const auto* p : params) {
      fetch("adam.m:" + p->name(), p->value().shape());
      fetch("adam.v:" + p->name(), p->value().shape());
    }
  }
  for (auto* p : params) p->value() = fetch(p->name(), p->value().shape());
  if (optimizer) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      optimizer->first_moments()[i] = fetch("adam.m:" + params[i]->name(), params[i]->value().shape());
      optimizer->second_moments()[i] = fetch("adam.v:" + params[i]->name(), params[i]->value().shape());
    }
    optimizer->set_step_count(info.step);
  }
  return info;
}

void save_checkpoint(const std::filesystem::path& path, const DiFlowModel& model,
                     const nn::Adam* optimizer, const std::string& run_config_json) {
  write_file_bytes(path, serialize_checkpoint(model, optimizer, run_config_json));
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, DiFlowModel& model,
                               nn::Adam* optimizer) {
  try {
    return load_checkpoint(read_file_bytes(path), model, optimizer);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) {
  try {
    return inspect_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace diflow
