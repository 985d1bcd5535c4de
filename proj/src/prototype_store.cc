#include "pagg/prototype_store.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"
#include "pagg/error.hpp"

namespace pagg {
namespace {

constexpr std::string_view kStoreMagic = "PSTO";
constexpr uint16_t kStoreVersion = 1;

}  // namespace

Prototype InitPrototype(std::span<const Eigen::VectorXd> embeddings) {
  if (embeddings.empty()) {
    throw std::invalid_argument("cannot build a prototype from no embeddings");
  }
  const Eigen::Index k = embeddings.front().size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
  for (const auto& e : embeddings) {
    if (e.size() != k) {
      throw std::invalid_argument("embedding dimension mismatch");
    }
    sum += e;
  }
  Prototype p;
  p.vector = sum / static_cast<double>(embeddings.size());
  p.count = static_cast<uint8_t>(
      std::min<size_t>(embeddings.size(), kMaxPrototypeCount));
  return p;
}

Prototype UpdatePrototype(const Prototype& p, const Eigen::VectorXd& e) {
  if (p.count == 0) throw std::invalid_argument("prototype is not initialized");
  if (e.size() != p.vector.size()) {
    throw std::invalid_argument("embedding dimension mismatch");
  }
  const double n = p.count;
  Prototype out;
  out.vector = (n / (n + 1.0)) * p.vector + (1.0 / (n + 1.0)) * e;
  out.count = static_cast<uint8_t>(std::min(p.count + 1, kMaxPrototypeCount));
  return out;
}

PrototypeStore::PrototypeStore(int embedding_dim) : dim_(embedding_dim) {
  if (embedding_dim < 1) {
    throw std::invalid_argument("embedding dimension must be positive");
  }
}

void PrototypeStore::CheckDim(const Eigen::VectorXd& v) const {
  if (v.size() != dim_) {
    throw std::invalid_argument("prototype dimension " +
                                std::to_string(v.size()) + " != store dimension " +
                                std::to_string(dim_));
  }
}

const Prototype& PrototypeStore::Add(uint64_t landmark_id,
                                     std::span<const Eigen::VectorXd> embeddings) {
  if (prototypes_.contains(landmark_id)) {
    throw std::invalid_argument("landmark " + std::to_string(landmark_id) +
                                " already has a prototype");
  }
  Prototype p = InitPrototype(embeddings);
  CheckDim(p.vector);
  return prototypes_.emplace(landmark_id, std::move(p)).first->second;
}

void PrototypeStore::Insert(uint64_t landmark_id, Prototype prototype) {
  CheckDim(prototype.vector);
  if (prototype.count == 0) {
    throw std::invalid_argument("prototype count must be >= 1");
  }
  if (!prototypes_.emplace(landmark_id, std::move(prototype)).second) {
    throw std::invalid_argument("landmark " + std::to_string(landmark_id) +
                                " already has a prototype");
  }
}

const Prototype& PrototypeStore::Get(uint64_t landmark_id) const {
  auto it = prototypes_.find(landmark_id);
  if (it == prototypes_.end()) {
    throw std::out_of_range("no prototype for landmark " +
                            std::to_string(landmark_id));
  }
  return it->second;
}

const Prototype& PrototypeStore::Update(uint64_t landmark_id,
                                        const Eigen::VectorXd& e) {
  auto it = prototypes_.find(landmark_id);
  if (it == prototypes_.end()) {
    throw std::out_of_range("no prototype for landmark " +
                            std::to_string(landmark_id));
  }
  it->second = UpdatePrototype(it->second, e);
  return it->second;
}

void PrototypeStore::Remove(uint64_t landmark_id) {
  if (prototypes_.erase(landmark_id) == 0) {
    throw std::out_of_range("no prototype for landmark " +
                            std::to_string(landmark_id));
  }
}

MemoryReport PrototypeStore::Report(int descriptor_bits) const {
  MemoryReport r;
  r.landmarks = prototypes_.size();
  r.embedding_dim = dim_;
  r.descriptor_bits = descriptor_bits;
  r.bytes_per_prototype = static_cast<size_t>(dim_) * sizeof(float) + 1;
  r.prototype_bytes = r.landmarks * r.bytes_per_prototype;
  for (const auto& [id, p] : prototypes_) r.raw_descriptors += p.count;
  r.raw_bytes = r.raw_descriptors * static_cast<size_t>(descriptor_bits / 8);
  if (r.landmarks > 0) {
    r.avg_descriptors_per_landmark =
        static_cast<double>(r.raw_descriptors) / static_cast<double>(r.landmarks);
    r.compression_ratio =
        static_cast<double>(r.raw_bytes) / static_cast<double>(r.prototype_bytes);
  }
  return r;
}

std::vector<uint8_t> PrototypeStore::Serialize() const {
  io::ByteWriter w;
  w.Magic(kStoreMagic);
  w.U16(kStoreVersion);
  w.U32(static_cast<uint32_t>(dim_));
  w.U64(prototypes_.size());
  for (const auto& [id, p] : prototypes_) {
    w.U64(id);
    w.U8(p.count);
    for (Eigen::Index i = 0; i < p.vector.size(); ++i) {
      w.F32(static_cast<float>(p.vector[i]));
    }
  }
  return w.bytes();
}

PrototypeStore PrototypeStore::Deserialize(std::span<const uint8_t> bytes,
                                           const std::string& name) {
  io::ByteReader r(bytes, name);
  r.ExpectMagic(kStoreMagic);
  r.ExpectVersion(kStoreVersion);
  const uint32_t k = r.U32();
  if (k == 0 || k > (1u << 20)) {
    throw FormatError(FormatError::Kind::kBadWidth,
                      name + ": invalid embedding dimension " + std::to_string(k));
  }
  const uint64_t count = r.U64();
  const uint64_t record_bytes = 9 + 4 * uint64_t{k};
  if (count > r.remaining() / record_bytes) {
    throw FormatError(FormatError::Kind::kTruncated, name + ": truncated file");
  }
  r.ExpectRemaining(count * record_bytes);
  PrototypeStore store(static_cast<int>(k));
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t id = r.U64();
    Prototype p;
    p.count = r.U8();
    p.vector.resize(k);
    for (uint32_t j = 0; j < k; ++j) {
      const float v = r.F32();
      if (!std::isfinite(v)) {
        throw FormatError(FormatError::Kind::kBadValue,
                          name + ": non-finite prototype component");
      }
      p.vector[j] = v;
    }
    try {
      store.Insert(id, std::move(p));
    } catch (const std::invalid_argument& e) {
      throw FormatError(FormatError::Kind::kBadValue, name + ": " + e.what());
    }
  }
  return store;
}

void PrototypeStore::Save(const std::filesystem::path& path) const {
  io::WriteFile(path, Serialize());
}

PrototypeStore PrototypeStore::Load(const std::filesystem::path& path) {
  return Deserialize(io::ReadFile(path), path.string());
}

}  // namespace pagg
