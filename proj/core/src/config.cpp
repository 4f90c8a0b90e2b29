#include "belx/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "belx/error.hpp"
#include "belx/text.hpp"

namespace belx {

namespace {

[[noreturn]] void config_error(const std::string& origin, std::size_t line,
                               const std::string& what) {
  throw Error(ErrorKind::kConfig, origin + ":" + std::to_string(line) + ": " + what);
}

// Returns the unquoted scalar, or "[a,b,...]" for arrays.
std::string parse_value(std::string_view raw, const std::string& origin, std::size_t line) {
  const auto v = text::trim(raw);
  if (v.empty()) config_error(origin, line, "missing value");
  if (v.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < v.size() && v[i] != '"'; ++i) {
      if (v[i] == '\\' && i + 1 < v.size()) {
        ++i;
        switch (v[i]) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: out += v[i];
        }
      } else {
        out += v[i];
      }
    }
    if (i != v.size() - 1) config_error(origin, line, "unterminated or trailing string");
    return out;
  }
  if (v.front() == '\'') {
    if (v.size() < 2 || v.back() != '\'') config_error(origin, line, "unterminated string");
    return std::string(v.substr(1, v.size() - 2));
  }
  if (v.front() == '[') {
    if (v.back() != ']') config_error(origin, line, "unterminated array");
    std::string out = "[";
    bool first = true;
    for (const auto item : text::split(v.substr(1, v.size() - 2), ',')) {
      const auto t = text::trim(item);
      if (t.empty()) continue;
      if (!first) out += ',';
      out += parse_value(t, origin, line);
      first = false;
    }
    return out + "]";
  }
  return std::string(v);
}

std::string strip_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

}  // namespace

ConfigTable ConfigTable::parse(std::string_view text_in, const std::string& origin) {
  ConfigTable table;
  std::string section;
  std::size_t line_no = 0;
  for (const auto raw : text::split(text_in, '\n')) {
    ++line_no;
    const auto line_s = strip_comment(raw);
    const auto line = text::trim(line_s);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) config_error(origin, line_no, "bad section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) config_error(origin, line_no, "expected key = value");
    const auto key = text::trim(line.substr(0, eq));
    if (key.empty()) config_error(origin, line_no, "empty key");
    const auto full = section.empty() ? std::string(key) : section + "." + std::string(key);
    table.values_[full] = parse_value(line.substr(eq + 1), origin, line_no);
  }
  return table;
}

ConfigTable ConfigTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kConfig, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void ConfigTable::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorKind::kConfig, "override '" + std::string(assignment) +
                                        "' must look like section.key=value");
  }
  const auto key = text::trim(assignment.substr(0, eq));
  if (key.empty()) throw Error(ErrorKind::kConfig, "override has an empty key");
  values_[std::string(key)] = parse_value(assignment.substr(eq + 1), "override", 1);
}

void ConfigTable::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
}

bool ConfigTable::has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::optional<std::string> ConfigTable::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

ScorerKind parse_scorer_kind(std::string_view name) {
  if (name == "none") return ScorerKind::kNone;
  if (name == "mock") return ScorerKind::kMock;
  if (name == "gold") return ScorerKind::kGold;
  if (name == "http") return ScorerKind::kHttp;
  throw Error(ErrorKind::kConfig, "unknown scorer '" + std::string(name) + "'");
}

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::kNone: return "none";
    case ScorerKind::kMock: return "mock";
    case ScorerKind::kGold: return "gold";
    case ScorerKind::kHttp: return "http";
  }
  return "?";
}

namespace {

class Reader {
 public:
  explicit Reader(const ConfigTable& t) : table_(t) {}

  template <typename Fn>
  void on(const std::string& key, Fn&& fn) {
    known_.insert(key);
    const auto v = table_.get(key);
    if (!v) return;
    try {
      fn(*v);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, key + ": " + e.what());
    }
  }

  void check_unknown() const {
    for (const auto& [k, v] : table_.values()) {
      if (!known_.contains(k)) throw Error(ErrorKind::kConfig, "unknown config key '" + k + "'");
    }
  }

 private:
  const ConfigTable& table_;
  std::set<std::string> known_;
};

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw Error(ErrorKind::kConfig, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::kConfig, "expected a number, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "no") return false;
  throw Error(ErrorKind::kConfig, "expected true or false, got '" + s + "'");
}

std::vector<std::string> to_list(const std::string& s) {
  std::string_view v = s;
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  for (const auto item : text::split(v, ',')) {
    const auto t = text::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::string join_list(const auto& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out + "]";
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

PipelineConfig PipelineConfig::from_table(const ConfigTable& table,
                                          const std::filesystem::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  Reader r(table);
  const auto size = [](std::size_t& dst) {
    return [&dst](const std::string& v) { dst = static_cast<std::size_t>(to_u64(v)); };
  };
  const auto real = [](double& dst) { return [&dst](const std::string& v) { dst = to_double(v); }; };
  const auto path = [](std::filesystem::path& dst) {
    return [&dst](const std::string& v) { dst = v; };
  };
  const auto flag = [](bool& dst) { return [&dst](const std::string& v) { dst = to_bool(v); }; };

  r.on("paths.work_dir", path(c.work_dir));
  r.on("paths.dump", path(c.dump));
  r.on("paths.dump_format", [&](const std::string& v) { c.dump_format = parse_dump_format(v); });
  r.on("paths.mapping", path(c.mapping));
  r.on("paths.eval_mentions", path(c.eval_mentions));
  r.on("paths.dataset", path(c.dataset));
  r.on("paths.dataset_format",
       [&](const std::string& v) { c.dataset_format = parse_dataset_format(v); });
  r.on("paths.kb", path(c.kb));

  r.on("run.seed", [&](const std::string& v) { c.seed = to_u64(v); });
  r.on("run.external_sort_rows", size(c.external_sort_rows));
  r.on("run.threads", size(c.threads));

  auto& e = c.encoder;
  r.on("encoder.backend", [&](const std::string& v) { e.backend = parse_encoder_backend(v); });
  r.on("encoder.dim", size(e.dimension));
  r.on("encoder.max_input_chars", size(e.max_input_chars));
  r.on("encoder.embedding_file", path(e.embedding_file));
  r.on("encoder.ngram_sizes", [&](const std::string& v) {
    e.ngram_sizes.clear();
    for (const auto& n : to_list(v)) e.ngram_sizes.push_back(static_cast<int>(to_u64(n)));
  });
  r.on("encoder.buckets", size(e.buckets));
  r.on("encoder.endpoint", [&](const std::string& v) { e.endpoint = v; });
  r.on("encoder.max_in_flight", size(e.max_in_flight));
  r.on("encoder.request_batch", size(e.request_batch));
  r.on("encoder.timeout_ms",
       [&](const std::string& v) { e.timeout = std::chrono::milliseconds(to_u64(v)); });

  auto& t = c.train;
  r.on("train.enabled", flag(c.train_enabled));
  r.on("train.batch", size(t.batch_size));
  r.on("train.lr", real(t.learning_rate));
  r.on("train.wd", real(t.weight_decay));
  r.on("train.epochs", size(t.epochs));
  r.on("train.margin", real(t.loss.margin_lambda));
  r.on("train.alpha", real(t.loss.alpha));
  r.on("train.beta", real(t.loss.beta));
  r.on("train.epsilon", real(t.loss.epsilon));
  r.on("train.mining", flag(t.mining));
  r.on("train.init_scale", real(t.init_scale));

  r.on("index.embed_batch", size(c.embed_batch));
  r.on("retrieval.k", size(c.k_candidates));
  r.on("retrieval.overscan", size(c.overscan));
  r.on("retrieval.k_eval", [&](const std::string& v) {
    c.k_eval.clear();
    for (const auto& n : to_list(v)) c.k_eval.push_back(static_cast<std::size_t>(to_u64(n)));
  });

  r.on("rerank.scorer", [&](const std::string& v) { c.scorer = parse_scorer_kind(v); });
  r.on("rerank.url", [&](const std::string& v) { c.http_scorer.url = v; });
  r.on("rerank.batch_endpoint", flag(c.http_scorer.use_batch_endpoint));
  r.on("rerank.batch_size", size(c.http_scorer.batch_size));
  r.on("rerank.max_in_flight", size(c.http_scorer.max_in_flight));
  r.on("rerank.timeout_ms", [&](const std::string& v) {
    c.http_scorer.timeout = std::chrono::milliseconds(to_u64(v));
  });
  r.on("rerank.marker", [&](const std::string& v) { c.rerank.marker = parse_marker_style(v); });
  r.on("rerank.fields",
       [&](const std::string& v) { c.rerank.fields = parse_document_fields(v); });
  r.on("rerank.doc_alias", [&](const std::string& v) { c.rerank.doc_alias = parse_doc_alias(v); });
  r.on("rerank.template", [&](const std::string& v) { c.rerank.template_id = v; });
  r.on("rerank.window_chars", size(c.rerank.window_chars));

  r.check_unknown();
  c.train.seed = c.seed;
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides) {
  auto table = ConfigTable::load(path);
  for (const auto& o : overrides) table.apply_override(o);
  return from_table(table, std::filesystem::absolute(path).parent_path());
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

std::filesystem::path PipelineConfig::artifact(std::string_view name) const {
  return resolve(work_dir) / std::string(name);
}

void PipelineConfig::validate() const {
  encoder.validate();
  train.validate();
  builtin_prompts().get(rerank.template_id);
  if (dump.empty()) throw Error(ErrorKind::kConfig, "paths.dump is required");
  if (mapping.empty()) throw Error(ErrorKind::kConfig, "paths.mapping is required");
  if (dataset.empty()) throw Error(ErrorKind::kConfig, "paths.dataset is required");
  if (k_candidates == 0 || overscan == 0) {
    throw Error(ErrorKind::kConfig, "retrieval.k and retrieval.overscan must be >= 1");
  }
  if (k_eval.empty()) throw Error(ErrorKind::kConfig, "retrieval.k_eval must not be empty");
  for (const auto k : k_eval) {
    if (k == 0) throw Error(ErrorKind::kConfig, "retrieval.k_eval entries must be >= 1");
  }
  if (scorer == ScorerKind::kHttp && http_scorer.url.empty()) {
    throw Error(ErrorKind::kConfig, "rerank.url is required for the http scorer");
  }
  if (encoder.backend == EncoderBackend::kFile && encoder.embedding_file.empty()) {
    throw Error(ErrorKind::kConfig, "encoder.embedding_file is required for the file backend");
  }
  if (encoder.backend == EncoderBackend::kRemote && encoder.endpoint.empty()) {
    throw Error(ErrorKind::kConfig, "encoder.endpoint is required for the remote backend");
  }
}

std::string PipelineConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["paths.dump_format"] = dump_format == DumpFormat::kAuto  ? "auto"
                            : dump_format == DumpFormat::kSql ? "sql"
                                                              : "tsv";
  kv["paths.dataset_format"] = dataset_format == DatasetFormat::kJsonl ? "jsonl" : "xlbel_tsv";
  kv["run.seed"] = std::to_string(seed);
  kv["encoder.backend"] = std::string(to_string(encoder.backend));
  kv["encoder.dim"] = std::to_string(encoder.dimension);
  kv["encoder.max_input_chars"] = std::to_string(encoder.max_input_chars);
  kv["encoder.ngram_sizes"] = join_list(encoder.ngram_sizes);
  kv["encoder.buckets"] = std::to_string(encoder.buckets);
  kv["encoder.endpoint"] = encoder.endpoint;
  kv["train.enabled"] = train_enabled ? "true" : "false";
  kv["train.batch"] = std::to_string(train.batch_size);
  kv["train.lr"] = fmt_double(train.learning_rate);
  kv["train.wd"] = fmt_double(train.weight_decay);
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.margin"] = fmt_double(train.loss.margin_lambda);
  kv["train.alpha"] = fmt_double(train.loss.alpha);
  kv["train.beta"] = fmt_double(train.loss.beta);
  kv["train.epsilon"] = fmt_double(train.loss.epsilon);
  kv["train.mining"] = train.mining ? "true" : "false";
  kv["train.init_scale"] = fmt_double(train.init_scale);
  kv["retrieval.k"] = std::to_string(k_candidates);
  kv["retrieval.overscan"] = std::to_string(overscan);
  kv["retrieval.k_eval"] = join_list(k_eval);
  kv["rerank.scorer"] = std::string(to_string(scorer));
  kv["rerank.url"] = scorer == ScorerKind::kHttp ? http_scorer.url : "";
  kv["rerank.marker"] = std::string(to_string(rerank.marker));
  kv["rerank.fields"] = std::string(to_string(rerank.fields));
  kv["rerank.doc_alias"] = std::string(to_string(rerank.doc_alias));
  kv["rerank.template"] = rerank.template_id;
  kv["rerank.window_chars"] = std::to_string(rerank.window_chars);
  kv["inputs.eval_mentions"] = eval_mentions.empty() ? "dataset" : "file";
  kv["inputs.kb"] = kb.empty() ? "none" : "file";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace belx
