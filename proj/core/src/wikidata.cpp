#include "belx/wikidata.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <queue>

#include "belx/error.hpp"
#include "belx/kb.hpp"
#include "belx/text.hpp"

namespace belx {

using nlohmann::json;

DumpFormat parse_dump_format(const std::string& name) {
  if (name == "auto") return DumpFormat::kAuto;
  if (name == "sql") return DumpFormat::kSql;
  if (name == "tsv") return DumpFormat::kTsv;
  throw Error(ErrorKind::kConfig, "unknown dump format '" + name + "'");
}

std::uint64_t parse_qid(std::string_view s) {
  s = text::trim(s);
  if (const auto slash = s.rfind('/'); slash != std::string_view::npos) {
    s.remove_prefix(slash + 1);
  }
  if (!s.empty() && (s.front() == 'Q' || s.front() == 'q')) s.remove_prefix(1);
  if (s.empty()) return 0;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return 0;
  return v;
}

namespace {

bool looks_like_sql(std::string_view line) {
  for (const std::string_view p :
       {"--", "/*", "INSERT", "CREATE", "DROP", "SET ", "LOCK", "UNLOCK"}) {
    if (line.starts_with(p)) return true;
  }
  return false;
}

// Builds a triple from raw fields; returns false for a malformed row.
bool make_triple(std::string_view qid_field, std::string_view alias_field,
                 std::string_view site_field, SiteTriple& out) {
  const auto qid = parse_qid(qid_field);
  if (qid == 0 || site_field.empty() || !text::is_valid_utf8(alias_field) ||
      !text::is_valid_utf8(site_field)) {
    return false;
  }
  auto alias = normalize_alias(alias_field);
  if (alias.empty()) return false;
  out.qid = qid;
  out.alias = std::move(alias);
  out.site = std::string(site_field);
  return true;
}

// Minimal tokenizer for MySQL INSERT value tuples.
class SqlTupleReader {
 public:
  explicit SqlTupleReader(std::string_view line) : s_(line) {}

  // Positions after the VALUES keyword; false if the line is not an INSERT.
  bool seek_values() {
    if (!s_.starts_with("INSERT")) return false;
    const auto pos = s_.find(" VALUES ");
    if (pos == std::string_view::npos) return false;
    i_ = pos + 8;
    return true;
  }

  enum class Status { kRow, kMalformed, kEnd };

  Status next(std::vector<std::string>& fields) {
    fields.clear();
    skip_separators();
    if (i_ >= s_.size()) return Status::kEnd;
    if (s_[i_] != '(') return resync();
    ++i_;
    while (true) {
      skip_spaces();
      if (i_ >= s_.size()) return Status::kMalformed;
      std::string field;
      if (s_[i_] == '\'') {
        if (!read_quoted(field)) return resync();
      } else {
        const auto begin = i_;
        while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ')') ++i_;
        field = std::string(text::trim(s_.substr(begin, i_ - begin)));
      }
      fields.push_back(std::move(field));
      skip_spaces();
      if (i_ >= s_.size()) return Status::kMalformed;
      if (s_[i_] == ',') {
        ++i_;
        continue;
      }
      if (s_[i_] == ')') {
        ++i_;
        return Status::kRow;
      }
      return resync();
    }
  }

 private:
  void skip_spaces() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r')) ++i_;
  }
  void skip_separators() {
    while (i_ < s_.size() &&
           (s_[i_] == ',' || s_[i_] == ' ' || s_[i_] == ';' || s_[i_] == '\r')) {
      ++i_;
    }
  }

  bool read_quoted(std::string& out) {
    ++i_;  // opening quote
    while (i_ < s_.size()) {
      const char c = s_[i_++];
      if (c == '\\') {
        if (i_ >= s_.size()) return false;
        const char e = s_[i_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case 'r': out.push_back('\r'); break;
          case '0': out.push_back('\0'); break;
          case 'Z': out.push_back('\x1a'); break;
          default: out.push_back(e); break;
        }
      } else if (c == '\'') {
        if (i_ < s_.size() && s_[i_] == '\'') {
          out.push_back('\'');
          ++i_;
        } else {
          return true;
        }
      } else {
        out.push_back(c);
      }
    }
    return false;
  }

  // Skips past the next "),(" boundary after a syntax error.
  Status resync() {
    const auto pos = s_.find("),(", i_);
    i_ = pos == std::string_view::npos ? s_.size() : pos + 2;
    return Status::kMalformed;
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

void check_malformed_ratio(const DumpParseStats& stats) {
  if (stats.rows > 0 && stats.malformed * 2 > stats.rows) {
    throw Error(ErrorKind::kFormat,
                "format mismatch: " + std::to_string(stats.malformed) + " of " +
                    std::to_string(stats.rows) + " rows malformed");
  }
}

}  // namespace

DumpParseStats parse_sitelink_dump(std::istream& in, DumpFormat format,
                                   const std::function<void(SiteTriple&&)>& sink) {
  DumpParseStats stats;
  stats.format = format;
  std::string line;
  std::vector<std::string> fields;
  constexpr std::size_t kEarlyCheckRows = 1000;
  bool early_checked = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    if (stats.format == DumpFormat::kAuto) {
      stats.format = looks_like_sql(line) ? DumpFormat::kSql : DumpFormat::kTsv;
    }

    if (stats.format == DumpFormat::kTsv) {
      ++stats.rows;
      const auto cols = text::split(line, '\t');
      SiteTriple t;
      if (cols.size() == 3 && make_triple(cols[0], cols[1], cols[2], t)) {
        ++stats.triples;
        sink(std::move(t));
      } else {
        ++stats.malformed;
      }
    } else {
      SqlTupleReader reader(line);
      if (!reader.seek_values()) continue;  // DDL, comments, locks
      while (true) {
        const auto status = reader.next(fields);
        if (status == SqlTupleReader::Status::kEnd) break;
        ++stats.rows;
        SiteTriple t;
        // (ips_row_id, ips_item_id, ips_site_id, ips_site_page)
        if (status == SqlTupleReader::Status::kRow && fields.size() == 4 &&
            make_triple(fields[1], fields[3], fields[2], t)) {
          ++stats.triples;
          sink(std::move(t));
        } else {
          ++stats.malformed;
        }
      }
    }
    if (!early_checked && stats.rows >= kEarlyCheckRows) {
      early_checked = true;
      check_malformed_ratio(stats);
    }
  }
  if (in.bad()) {
    throw Error(ErrorKind::kPipeline, "dump stream read failure after " +
                                          std::to_string(stats.rows) +
                                          " rows processed");
  }
  if (stats.format == DumpFormat::kAuto) stats.format = DumpFormat::kTsv;
  check_malformed_ratio(stats);
  return stats;
}

std::vector<SiteTriple> parse_sitelink_dump(std::istream& in, DumpFormat format) {
  std::vector<SiteTriple> out;
  parse_sitelink_dump(in, format, [&](SiteTriple&& t) { out.push_back(std::move(t)); });
  return out;
}

MappingLoad load_cui_mapping(std::istream& in) {
  MappingLoad result;
  const std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::kIo, "failed reading CUI mapping");
  const auto body = text::trim(content);
  if (body.empty()) return result;

  if (body.front() == '{') {
    json doc;
    try {
      doc = json::parse(body);
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, std::string("SPARQL results: ") + ex.what());
    }
    const auto results = doc.find("results");
    if (results == doc.end() || !results->contains("bindings") ||
        !(*results)["bindings"].is_array()) {
      throw Error(ErrorKind::kFormat, "SPARQL results: missing results.bindings");
    }
    for (const auto& b : (*results)["bindings"]) {
      ++result.rows;
      const auto item = b.find("item");
      const auto cui = b.find("cui");
      if (item == b.end() || cui == b.end() || !item->contains("value") ||
          !cui->contains("value")) {
        ++result.skipped;
        continue;
      }
      const auto qid = parse_qid((*item)["value"].get<std::string>());
      const auto code = std::string(text::trim((*cui)["value"].get<std::string>()));
      if (qid == 0 || code.empty()) {
        ++result.skipped;
        continue;
      }
      result.mapping[qid].insert(code);
    }
    return result;
  }

  for (const auto line : text::split(body, '\n')) {
    const auto row = text::trim(line);
    if (row.empty()) continue;
    ++result.rows;
    const auto cols = text::split(row, '\t');
    const auto qid = cols.size() == 2 ? parse_qid(cols[0]) : 0;
    const auto code = cols.size() == 2 ? text::trim(cols[1]) : std::string_view{};
    if (qid == 0 || code.empty()) {
      ++result.skipped;
      continue;
    }
    result.mapping[qid].insert(std::string(code));
  }
  if (result.rows > 0 && result.skipped * 2 > result.rows) {
    throw Error(ErrorKind::kFormat, "CUI mapping: " + std::to_string(result.skipped) +
                                        " of " + std::to_string(result.rows) +
                                        " rows unparseable");
  }
  return result;
}

MappingLoad load_cui_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open mapping " + path.string());
  return load_cui_mapping(in);
}

void join_aliases_with_cuis(const SiteTriple& triple, const CuiMapping& mapping,
                            const std::function<void(AliasTuple&&)>& sink) {
  const auto it = mapping.find(triple.qid);
  if (it == mapping.end()) return;
  const auto language = parse_site_language(triple.site).tag;
  for (const auto& cui : it->second) {
    sink(AliasTuple{triple.qid, triple.alias, language, cui});
  }
}

std::vector<AliasTuple> join_aliases_with_cuis(const std::vector<SiteTriple>& triples,
                                               const CuiMapping& mapping) {
  std::vector<AliasTuple> out;
  for (const auto& t : triples) {
    join_aliases_with_cuis(t, mapping, [&](AliasTuple&& a) { out.push_back(std::move(a)); });
  }
  return out;
}

EvalMentionSet::EvalMentionSet(const std::vector<std::string>& raw_mentions) {
  for (const auto& m : raw_mentions) insert(m);
}

void EvalMentionSet::insert(std::string_view raw_mention) {
  auto n = normalize_alias(raw_mention);
  if (!n.empty()) normalized_.insert(std::move(n));
}

bool EvalMentionSet::contains_alias(std::string_view alias) const {
  return normalized_.contains(normalize_alias(alias));
}

EvalMentionSet load_eval_mentions(std::istream& in) {
  EvalMentionSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    set.insert(line);
  }
  return set;
}

FilterResult filter_eval_overlap(const std::vector<AliasTuple>& tuples,
                                 const EvalMentionSet& eval_mentions) {
  FilterResult result;
  result.kept.reserve(tuples.size());
  for (const auto& t : tuples) {
    if (!eval_mentions.empty() && eval_mentions.contains_alias(t.alias)) {
      ++result.removed;
    } else {
      result.kept.push_back(t);
    }
  }
  return result;
}

namespace {

// Appends `t` to `g` unless its alias string is already a member.
void add_member(PositiveGroup& g, AliasTuple&& t) {
  ++g.raw_count;
  const bool seen = std::any_of(g.members.begin(), g.members.end(),
                                [&](const AliasTuple& m) { return m.alias == t.alias; });
  if (!seen) g.members.push_back(std::move(t));
}

}  // namespace

std::vector<PositiveGroup> group_positives(const std::vector<AliasTuple>& tuples) {
  std::vector<std::size_t> order(tuples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tuples[a].qid < tuples[b].qid;
  });
  std::vector<PositiveGroup> groups;
  for (const auto i : order) {
    if (groups.empty() || groups.back().qid != tuples[i].qid) {
      groups.push_back(PositiveGroup{tuples[i].qid, {}, 0});
    }
    add_member(groups.back(), AliasTuple(tuples[i]));
  }
  return groups;
}

namespace {

struct RunCursor {
  std::ifstream in;
  std::uint64_t seq = 0;
  AliasTuple tuple;

  bool advance() {
    std::string line;
    if (!std::getline(in, line)) return false;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorKind::kIo, "corrupt spill run");
    }
    seq = std::stoull(line.substr(0, tab));
    if (!parse_tuple_line(std::string_view(line).substr(tab + 1), tuple)) {
      throw Error(ErrorKind::kIo, "corrupt spill run");
    }
    return true;
  }
};

}  // namespace

ExternalGroupStats group_positives_external(std::istream& tuples_tsv,
                                            std::ostream& groups_jsonl,
                                            std::size_t max_rows_in_memory,
                                            const std::filesystem::path& temp_dir) {
  if (max_rows_in_memory == 0) {
    throw Error(ErrorKind::kConfig, "max_rows_in_memory must be positive");
  }
  namespace fs = std::filesystem;
  fs::create_directories(temp_dir);
  ExternalGroupStats stats;
  std::vector<fs::path> runs;
  std::vector<std::pair<std::uint64_t, AliasTuple>> buffer;  // (seq, tuple)

  const auto spill = [&] {
    if (buffer.empty()) return;
    std::stable_sort(buffer.begin(), buffer.end(), [](const auto& a, const auto& b) {
      return a.second.qid < b.second.qid;
    });
    const auto path = temp_dir / ("run-" + std::to_string(runs.size()) + ".tsv");
    std::ofstream out(path, std::ios::binary);
    for (const auto& [seq, t] : buffer) {
      out << seq << '\t';
      write_tuple_tsv(out, t);
    }
    if (!out) throw Error(ErrorKind::kIo, "cannot write spill run " + path.string());
    runs.push_back(path);
    buffer.clear();
  };

  for_each_tuple_tsv(tuples_tsv, [&](AliasTuple&& t) {
    buffer.emplace_back(stats.tuples++, std::move(t));
    if (buffer.size() >= max_rows_in_memory) spill();
  });
  spill();
  stats.runs = runs.size();

  std::vector<RunCursor> cursors(runs.size());
  using HeapEntry = std::pair<std::pair<std::uint64_t, std::uint64_t>, std::size_t>;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    cursors[r].in.open(runs[r], std::ios::binary);
    if (cursors[r].advance()) {
      heap.push({{cursors[r].tuple.qid, cursors[r].seq}, r});
    }
  }

  std::optional<PositiveGroup> current;
  const auto flush = [&] {
    if (!current) return;
    write_group_jsonl(groups_jsonl, *current);
    ++stats.groups;
    if (current->single_alias()) ++stats.single_alias_groups;
    current.reset();
  };
  while (!heap.empty()) {
    const auto r = heap.top().second;
    heap.pop();
    AliasTuple t = std::move(cursors[r].tuple);
    if (!current || current->qid != t.qid) {
      flush();
      current = PositiveGroup{t.qid, {}, 0};
    }
    add_member(*current, std::move(t));
    if (cursors[r].advance()) {
      heap.push({{cursors[r].tuple.qid, cursors[r].seq}, r});
    }
  }
  flush();

  for (auto& c : cursors) c.in.close();
  for (const auto& p : runs) fs::remove(p);
  return stats;
}

void CorpusStatsAccumulator::add(const AliasTuple& t) {
  ++total_;
  ++by_language_[t.language];
  cuis_by_qid_[t.qid].insert(t.cui);
  cuis_.insert(t.cui);
}

CorpusStats CorpusStatsAccumulator::finish() const {
  CorpusStats s;
  s.total = total_;
  s.languages = by_language_.size();
  s.distinct_qids = cuis_by_qid_.size();
  s.distinct_cuis = cuis_.size();
  for (const auto& [qid, cuis] : cuis_by_qid_) {
    if (cuis.size() > 1) ++s.multi_cui_qids;
  }
  for (const auto& [lang, count] : by_language_) {
    s.per_language.push_back(
        {lang, count, total_ == 0 ? 0.0 : 100.0 * static_cast<double>(count) /
                                              static_cast<double>(total_)});
  }
  std::stable_sort(s.per_language.begin(), s.per_language.end(),
                   [](const LanguageShare& a, const LanguageShare& b) {
                     return a.count > b.count;
                   });
  return s;
}

double CorpusStats::percent_of(std::string_view language) const {
  for (const auto& l : per_language) {
    if (l.language == language) return l.percent;
  }
  return 0.0;
}

CorpusStats corpus_stats(const std::vector<AliasTuple>& tuples) {
  CorpusStatsAccumulator acc;
  for (const auto& t : tuples) acc.add(t);
  return acc.finish();
}

void write_triple_tsv(std::ostream& out, const SiteTriple& t) {
  out << t.qid << '\t' << t.alias << '\t' << t.site << '\n';
}

void write_tuple_tsv(std::ostream& out, const AliasTuple& t) {
  out << t.qid << '\t' << t.alias << '\t' << t.language << '\t' << t.cui << '\n';
}

bool parse_tuple_line(std::string_view line, AliasTuple& out) {
  const auto cols = text::split(line, '\t');
  if (cols.size() != 4) return false;
  const auto qid = parse_qid(cols[0]);
  if (qid == 0 || cols[1].empty() || cols[2].empty() || cols[3].empty()) return false;
  out.qid = qid;
  out.alias = std::string(cols[1]);
  out.language = std::string(cols[2]);
  out.cui = std::string(cols[3]);
  return true;
}

void for_each_tuple_tsv(std::istream& in,
                        const std::function<void(AliasTuple&&)>& sink) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    AliasTuple t;
    if (!parse_tuple_line(line, t)) {
      throw Error(ErrorKind::kFormat,
                  "alias tuple line " + std::to_string(line_no) + " is malformed");
    }
    sink(std::move(t));
  }
  if (in.bad()) throw Error(ErrorKind::kIo, "failed reading alias tuples");
}

std::vector<AliasTuple> read_tuples_tsv(std::istream& in) {
  std::vector<AliasTuple> out;
  for_each_tuple_tsv(in, [&](AliasTuple&& t) { out.push_back(std::move(t)); });
  return out;
}

void write_group_jsonl(std::ostream& out, const PositiveGroup& g) {
  json aliases = json::array();
  for (const auto& m : g.members) {
    aliases.push_back({{"text", m.alias}, {"lang", m.language}, {"cui", m.cui}});
  }
  out << json{{"qid", g.qid}, {"aliases", aliases}}.dump() << '\n';
}

std::vector<PositiveGroup> read_groups_jsonl(std::istream& in) {
  std::vector<PositiveGroup> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      PositiveGroup g;
      g.qid = j.at("qid").get<std::uint64_t>();
      for (const auto& a : j.at("aliases")) {
        g.members.push_back(AliasTuple{g.qid, a.at("text").get<std::string>(),
                                       a.at("lang").get<std::string>(),
                                       a.at("cui").get<std::string>()});
      }
      g.raw_count = g.members.size();
      groups.push_back(std::move(g));
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat,
                  "groups line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return groups;
}

}  // namespace belx
