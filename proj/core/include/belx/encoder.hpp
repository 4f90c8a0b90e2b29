#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "belx/http.hpp"
#include "belx/projection.hpp"

namespace belx {

using Embedding = std::vector<float>;

enum class EncoderBackend { kFile, kHashedNgram, kRemote };

EncoderBackend parse_encoder_backend(std::string_view name);
std::string_view to_string(EncoderBackend backend);

struct EncoderConfig {
  std::size_t dimension = 64;
  EncoderBackend backend = EncoderBackend::kHashedNgram;
  std::size_t max_input_chars = 128;

  // file backend
  std::filesystem::path embedding_file;

  // hashed_ngram backend
  std::vector<int> ngram_sizes = {2, 3, 4};
  std::size_t buckets = 4096;

  // remote backend
  std::string endpoint;
  std::size_t max_in_flight = 4;
  std::size_t request_batch = 32;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{10000};

  /// Throws Error(kConfig) when dimension < 2 or max_input_chars < 1.
  void validate() const;
};

/// Scales `v` to unit l2 norm. Throws Error(kDegenerateVector) for a zero (or
/// non-finite) vector.
Embedding l2_normalize(std::span<const float> v);
std::vector<double> l2_normalize(std::span<const double> v);

/// Signed hashed character n-grams of the lowercased string.
///
/// Each n-gram (over code points, no boundary padding) is hashed as its UTF-8
/// bytes with 64-bit FNV-1a; bucket = h mod buckets, sign = -1 when bit 63 of
/// h is set. A string shorter than every n-gram size hashes as one gram.
SparseFeatures hashed_ngram_features(std::string_view s, const EncoderConfig& config);

/// The encoder g(.): strings to unit vectors of a fixed dimension.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::string describe() const = 0;

  /// One unit vector per input. Inputs are truncated to max_input_chars code
  /// points; a string that is blank after truncation is a precondition error.
  std::vector<Embedding> embed(std::span<const std::string> batch) const;
  Embedding embed_one(std::string_view s) const;

  const EncoderConfig& config() const noexcept { return config_; }

 protected:
  explicit Encoder(EncoderConfig config);
  virtual std::vector<Embedding> embed_prepared(
      std::span<const std::string> batch) const = 0;

 private:
  EncoderConfig config_;
};

/// Exact-string lookup into a BELXEMB1 embedding file.
class FileEncoder final : public Encoder {
 public:
  explicit FileEncoder(EncoderConfig config);
  std::size_t dimension() const override { return dimension_; }
  std::string describe() const override;
  std::size_t size() const noexcept { return table_.size(); }

 protected:
  std::vector<Embedding> embed_prepared(std::span<const std::string> batch) const override;

 private:
  std::size_t dimension_ = 0;
  std::unordered_map<std::string, Embedding> table_;
};

/// Hashed n-gram featurizer, optionally followed by a trained projection
/// head. Without a head the output dimension is the bucket count.
class HashedNgramEncoder final : public Encoder {
 public:
  explicit HashedNgramEncoder(EncoderConfig config,
                              std::optional<ProjectionHead> head = std::nullopt);
  std::size_t dimension() const override;
  std::string describe() const override;

  const std::optional<ProjectionHead>& head() const noexcept { return head_; }

 protected:
  std::vector<Embedding> embed_prepared(std::span<const std::string> batch) const override;

 private:
  std::optional<ProjectionHead> head_;
};

/// JSON-over-HTTP client: POST /embed {"texts": [...]} ->
/// {"vectors": [[...], ...], "dim": int}. Requests of up to request_batch
/// texts run with at most max_in_flight in flight; responses are reassembled
/// in request order and re-normalized.
class RemoteEncoder final : public Encoder {
 public:
  explicit RemoteEncoder(EncoderConfig config);
  std::size_t dimension() const override { return config().dimension; }
  std::string describe() const override;

 protected:
  std::vector<Embedding> embed_prepared(std::span<const std::string> batch) const override;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config,
                                      std::optional<ProjectionHead> head = std::nullopt);

/// BELXEMB1 embedding file: magic, u32 d, u64 count, then per record
/// u32 byte length, UTF-8 bytes, d float32 values. Little-endian.
struct EmbeddingRecord {
  std::string text;
  Embedding vector;
};
void write_embedding_file(const std::filesystem::path& path, std::size_t dimension,
                          std::span<const EmbeddingRecord> records);
std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path,
                                                 std::size_t* dimension = nullptr);

}  // namespace belx
