#ifndef PAGG_PROTOTYPE_STORE_HPP
#define PAGG_PROTOTYPE_STORE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pagg {

// Largest observation count representable in the one-byte counter.
inline constexpr int kMaxPrototypeCount = 255;

// A landmark's compact representation: mean embedding plus the number of
// descriptors folded into it.
struct Prototype {
  Eigen::VectorXd vector;
  uint8_t count = 0;
};

// Mean of `embeddings`; count = min(n, 255). Throws std::invalid_argument for
// an empty list or mismatched dimensions.
Prototype InitPrototype(std::span<const Eigen::VectorXd> embeddings);

// Folds one more embedding into the running mean:
//   p' = n/(n+1) p + 1/(n+1) e,   n = count.
// Past 255 the counter saturates and the weight stays 1/256.
Prototype UpdatePrototype(const Prototype& p, const Eigen::VectorXd& e);

struct MemoryReport {
  size_t landmarks = 0;
  int embedding_dim = 0;
  int descriptor_bits = 0;
  // float32 components + one count byte.
  size_t bytes_per_prototype = 0;
  size_t prototype_bytes = 0;
  // Raw descriptors the prototypes replace (sum of counts).
  size_t raw_descriptors = 0;
  size_t raw_bytes = 0;
  double avg_descriptors_per_landmark = 0.0;
  // raw_bytes / prototype_bytes; 0 for an empty store.
  double compression_ratio = 0.0;
};

// Landmark id -> prototype map of a fixed embedding dimension.
//
// Concurrent readers are safe. Add and Remove change the map structure and
// need exclusive access; Update of one landmark must be serialized by the
// caller against other access to that same landmark.
class PrototypeStore {
 public:
  explicit PrototypeStore(int embedding_dim);

  int embedding_dim() const { return dim_; }
  size_t size() const { return prototypes_.size(); }
  bool empty() const { return prototypes_.empty(); }
  bool contains(uint64_t landmark_id) const {
    return prototypes_.contains(landmark_id);
  }

  // Throws std::invalid_argument if the id is already present.
  const Prototype& Add(uint64_t landmark_id,
                       std::span<const Eigen::VectorXd> embeddings);
  // Inserts an already computed prototype (used by Load).
  void Insert(uint64_t landmark_id, Prototype prototype);
  // Throws std::out_of_range for an unknown id.
  const Prototype& Get(uint64_t landmark_id) const;
  const Prototype& Update(uint64_t landmark_id, const Eigen::VectorXd& e);
  void Remove(uint64_t landmark_id);

  const std::map<uint64_t, Prototype>& prototypes() const { return prototypes_; }

  MemoryReport Report(int descriptor_bits) const;

  // "PSTO" format: magic, u16 version, u32 k, u64 count, then
  // (u64 landmark id, u8 count, k float32) records, little-endian.
  std::vector<uint8_t> Serialize() const;
  static PrototypeStore Deserialize(std::span<const uint8_t> bytes,
                                    const std::string& name = "store");
  void Save(const std::filesystem::path& path) const;
  static PrototypeStore Load(const std::filesystem::path& path);

 private:
  void CheckDim(const Eigen::VectorXd& v) const;

  int dim_;
  std::map<uint64_t, Prototype> prototypes_;
};

}  // namespace pagg

#endif  // PAGG_PROTOTYPE_STORE_HPP
