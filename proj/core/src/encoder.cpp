#include "belx/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

#include "belx/error.hpp"
#include "belx/text.hpp"
#include "binary_io.hpp"

namespace belx {

using nlohmann::json;

EncoderBackend parse_encoder_backend(std::string_view name) {
  if (name == "file") return EncoderBackend::kFile;
  if (name == "hashed_ngram") return EncoderBackend::kHashedNgram;
  if (name == "remote") return EncoderBackend::kRemote;
  throw Error(ErrorKind::kConfig, "unknown encoder backend '" + std::string(name) + "'");
}

std::string_view to_string(EncoderBackend backend) {
  switch (backend) {
    case EncoderBackend::kFile: return "file";
    case EncoderBackend::kHashedNgram: return "hashed_ngram";
    case EncoderBackend::kRemote: return "remote";
  }
  return "unknown";
}

void EncoderConfig::validate() const {
  if (dimension < 2) throw Error(ErrorKind::kConfig, "encoder dimension must be >= 2");
  if (max_input_chars < 1) {
    throw Error(ErrorKind::kConfig, "max_input_chars must be >= 1");
  }
  if (backend == EncoderBackend::kHashedNgram) {
    if (buckets < 2) throw Error(ErrorKind::kConfig, "need at least 2 hash buckets");
    if (ngram_sizes.empty()) throw Error(ErrorKind::kConfig, "no n-gram sizes configured");
    for (const int n : ngram_sizes) {
      if (n < 1) throw Error(ErrorKind::kConfig, "n-gram sizes must be positive");
    }
  }
  if (backend == EncoderBackend::kRemote && max_in_flight < 1) {
    throw Error(ErrorKind::kConfig, "max_in_flight must be >= 1");
  }
}

namespace {

template <typename T>
std::vector<T> normalized(std::span<const T> v) {
  double sum = 0.0;
  for (const T x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sum);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorKind::kDegenerateVector, "cannot normalize a zero or non-finite vector");
  }
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(v[i]) / norm);
  }
  return out;
}

// Truncates to at most `max_chars` code points.
std::string truncate_chars(std::string_view s, std::size_t max_chars) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (text::is_char_boundary(s, i)) {
      if (count == max_chars) return std::string(s.substr(0, i));
      ++count;
    }
  }
  return std::string(s);
}

}  // namespace

Embedding l2_normalize(std::span<const float> v) { return normalized(v); }
std::vector<double> l2_normalize(std::span<const double> v) { return normalized(v); }

SparseFeatures hashed_ngram_features(std::string_view s, const EncoderConfig& config) {
  const std::u32string cps = text::to_lower(text::decode_utf8(s));
  std::map<std::uint32_t, double> acc;
  const auto add_gram = [&](std::u32string_view gram) {
    const std::uint64_t h = text::fnv1a64(text::encode_utf8(gram));
    const auto bucket = static_cast<std::uint32_t>(h % config.buckets);
    acc[bucket] += (h >> 63) != 0 ? -1.0 : 1.0;
  };
  bool any = false;
  for (const int n : config.ngram_sizes) {
    const auto width = static_cast<std::size_t>(n);
    if (cps.size() < width) continue;
    for (std::size_t i = 0; i + width <= cps.size(); ++i) {
      add_gram(std::u32string_view(cps).substr(i, width));
      any = true;
    }
  }
  if (!any && !cps.empty()) add_gram(cps);

  SparseFeatures out;
  for (const auto& [bucket, value] : acc) {
    if (value == 0.0) continue;  // colliding signs cancelled
    out.index.push_back(bucket);
    out.value.push_back(value);
  }
  return out;
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::vector<Embedding> Encoder::embed(std::span<const std::string> batch) const {
  std::vector<std::string> prepared;
  prepared.reserve(batch.size());
  for (const auto& s : batch) {
    auto t = truncate_chars(s, config_.max_input_chars);
    if (text::trim(t).empty()) {
      throw Error(ErrorKind::kPrecondition,
                  "cannot embed a blank string (input '" + s + "')");
    }
    prepared.push_back(std::move(t));
  }
  auto out = embed_prepared(prepared);
  if (out.size() != batch.size()) {
    throw Error(ErrorKind::kInvariant, "encoder returned the wrong number of vectors");
  }
  for (auto& v : out) {
    if (v.size() != dimension()) {
      throw Error(ErrorKind::kInvariant, "encoder returned a vector of wrong dimension");
    }
    v = l2_normalize(std::span<const float>(v));
  }
  return out;
}

Embedding Encoder::embed_one(std::string_view s) const {
  const std::string one(s);
  return std::move(embed(std::span<const std::string>(&one, 1)).front());
}

FileEncoder::FileEncoder(EncoderConfig config) : Encoder(std::move(config)) {
  auto records = read_embedding_file(this->config().embedding_file, &dimension_);
  for (auto& r : records) table_.insert_or_assign(std::move(r.text), std::move(r.vector));
}

std::string FileEncoder::describe() const {
  return "file:" + config().embedding_file.filename().string();
}

std::vector<Embedding> FileEncoder::embed_prepared(std::span<const std::string> batch) const {
  std::vector<Embedding> out;
  out.reserve(batch.size());
  for (const auto& s : batch) {
    const auto it = table_.find(s);
    if (it == table_.end()) {
      throw Error(ErrorKind::kMissingEmbedding, "no embedding for '" + s + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

HashedNgramEncoder::HashedNgramEncoder(EncoderConfig config,
                                       std::optional<ProjectionHead> head)
    : Encoder(std::move(config)), head_(std::move(head)) {
  if (head_ && head_->input_dim() != this->config().buckets) {
    throw Error(ErrorKind::kConfig,
                "projection head expects " + std::to_string(head_->input_dim()) +
                    " features but the featurizer has " +
                    std::to_string(this->config().buckets) + " buckets");
  }
}

std::size_t HashedNgramEncoder::dimension() const {
  return head_ ? head_->output_dim() : config().buckets;
}

std::string HashedNgramEncoder::describe() const {
  std::string sizes;
  for (const int n : config().ngram_sizes) {
    if (!sizes.empty()) sizes += ',';
    sizes += std::to_string(n);
  }
  return "hashed_ngram(n=" + sizes + ",buckets=" + std::to_string(config().buckets) +
         (head_ ? ",head=" + std::to_string(head_->output_dim()) : std::string{}) + ")";
}

std::vector<Embedding> HashedNgramEncoder::embed_prepared(
    std::span<const std::string> batch) const {
  std::vector<Embedding> out;
  out.reserve(batch.size());
  std::vector<double> z;
  for (const auto& s : batch) {
    const auto x = hashed_ngram_features(s, config());
    Embedding v;
    if (head_) {
      z.assign(head_->output_dim(), 0.0);
      head_->forward(x, z);
      v.assign(z.begin(), z.end());
    } else {
      v.assign(config().buckets, 0.0F);
      for (std::size_t k = 0; k < x.nnz(); ++k) {
        v[x.index[k]] = static_cast<float>(x.value[k]);
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

RemoteEncoder::RemoteEncoder(EncoderConfig config) : Encoder(std::move(config)) {
  HttpEndpoint::parse(this->config().endpoint);  // validates early
}

std::string RemoteEncoder::describe() const { return "remote:" + config().endpoint; }

std::vector<Embedding> RemoteEncoder::embed_prepared(std::span<const std::string> batch) const {
  const auto& cfg = config();
  const JsonHttpClient client(HttpEndpoint::parse(cfg.endpoint), cfg.retry, cfg.timeout);
  const std::size_t chunk = std::max<std::size_t>(1, cfg.request_batch);
  const std::size_t chunks = (batch.size() + chunk - 1) / chunk;
  std::vector<Embedding> out(batch.size());

  run_bounded(chunks, cfg.max_in_flight, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(batch.size(), begin + chunk);
    json request = {{"texts", json::array()}};
    for (std::size_t i = begin; i < end; ++i) request["texts"].push_back(batch[i]);
    const auto body = client.post("/embed", request.dump());
    json response;
    try {
      response = json::parse(body);
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, std::string("/embed response: ") + ex.what());
    }
    try {
      const auto& vectors = response.at("vectors");
      if (!vectors.is_array() || vectors.size() != end - begin) {
        throw Error(ErrorKind::kFormat, "/embed returned the wrong number of vectors");
      }
      if (response.contains("dim") && response["dim"].get<std::size_t>() != cfg.dimension) {
        throw Error(ErrorKind::kFormat, "/embed dimension mismatch");
      }
      for (std::size_t i = begin; i < end; ++i) {
        out[i] = vectors[i - begin].get<Embedding>();
      }
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, std::string("/embed response: ") + ex.what());
    }
  });
  return out;
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config,
                                      std::optional<ProjectionHead> head) {
  switch (config.backend) {
    case EncoderBackend::kFile: return std::make_unique<FileEncoder>(config);
    case EncoderBackend::kHashedNgram:
      return std::make_unique<HashedNgramEncoder>(config, std::move(head));
    case EncoderBackend::kRemote: return std::make_unique<RemoteEncoder>(config);
  }
  throw Error(ErrorKind::kConfig, "unknown encoder backend");
}

void write_embedding_file(const std::filesystem::path& path, std::size_t dimension,
                          std::span<const EmbeddingRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  binary::put_magic(out, "BELXEMB1");
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(dimension));
  binary::put<std::uint64_t>(out, records.size());
  for (const auto& r : records) {
    if (r.vector.size() != dimension) {
      throw Error(ErrorKind::kPrecondition, "embedding record dimension mismatch");
    }
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(r.text.size()));
    out.write(r.text.data(), static_cast<std::streamsize>(r.text.size()));
    for (const float v : r.vector) binary::put<float>(out, v);
  }
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path,
                                                 std::size_t* dimension) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open embedding file " + path.string());
  binary::expect_magic(in, "BELXEMB1");
  const auto d = binary::get<std::uint32_t>(in, "dimension");
  const auto count = binary::get<std::uint64_t>(in, "record count");
  std::vector<EmbeddingRecord> records;
  records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = binary::get<std::uint32_t>(in, "string length");
    EmbeddingRecord rec;
    rec.text = binary::get_bytes(in, len, "string bytes");
    rec.vector.resize(d);
    for (auto& v : rec.vector) v = binary::get<float>(in, "vector");
    records.push_back(std::move(rec));
  }
  if (dimension) *dimension = d;
  return records;
}

}  // namespace belx
