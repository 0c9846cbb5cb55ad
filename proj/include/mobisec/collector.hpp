#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "mobisec/types.hpp"

namespace mobisec {

struct TruthInterval;

enum class TraceSource : std::uint8_t { HONEYPOT, HONEYCLIENT, SIMULATOR, EXTERNAL };
enum class Behavior : std::uint8_t {
  STEAL_INFO,
  MONITORING,
  ADWARE,
  PREMIUM_ABUSE,
  CLICK_FRAUD,
  SEO,
  SPAM,
  DOWNLOADER,
  BOTCLIENT,
  ROOTING,
  RANSOM,
  DESTRUCTION,
  DOS
};
enum class EnrichField : std::uint8_t { os_guess, reverse_name, asn, geo };

template <>
struct EnumNames<TraceSource> {
  static constexpr std::array<std::string_view, 4> names{"HONEYPOT", "HONEYCLIENT", "SIMULATOR", "EXTERNAL"};
};
template <>
struct EnumNames<Behavior> {
  static constexpr std::array<std::string_view, 13> names{
      "STEAL_INFO", "MONITORING", "ADWARE",     "PREMIUM_ABUSE", "CLICK_FRAUD", "SEO", "SPAM",
      "DOWNLOADER", "BOTCLIENT",  "ROOTING",    "RANSOM",        "DESTRUCTION", "DOS"};
};
template <>
struct EnumNames<EnrichField> {
  static constexpr std::array<std::string_view, 4> names{"os_guess", "reverse_name", "asn", "geo"};
};
MOBISEC_ENUM_JSON(TraceSource)
MOBISEC_ENUM_JSON(Behavior)
MOBISEC_ENUM_JSON(EnrichField)

struct Enrichment {
  std::array<std::optional<std::string>, 4> fields;  // indexed by EnrichField

  std::optional<std::string>& operator[](EnrichField f) { return fields[static_cast<std::size_t>(f)]; }
  const std::optional<std::string>& operator[](EnrichField f) const { return fields[static_cast<std::size_t>(f)]; }
  bool empty() const;
  bool operator==(const Enrichment&) const = default;
};

struct TraceRecord {
  std::string trace_id;  // hex SHA-256 of the canonical payload
  TraceSource source = TraceSource::HONEYPOT;
  std::string observed_at;  // ISO-8601, UTC
  std::string attacker_endpoint;
  std::set<Behavior> behaviors;
  std::string payload_digest;
  Enrichment enrichment;
  std::optional<std::uint64_t> cluster_id;
  bool operator==(const TraceRecord&) const = default;
};

// The identity-bearing fields as compact JSON with sorted keys; behaviors in
// enumeration order.
std::string canonical_payload(const TraceRecord& r);
std::string compute_trace_id(const TraceRecord& r);

// Decodes one trace-file line. Derived fields (enrichment, cluster_id) are
// ignored; a trace_id, if present, must match. Throws ValidationError.
TraceRecord decode_trace(const json& j);

void to_json(json& j, const Enrichment& e);
void from_json(const json& j, Enrichment& e);
void to_json(json& j, const TraceRecord& r);

struct IngestResult {
  std::size_t inserted = 0;
  std::size_t duplicates = 0;
  std::vector<std::pair<std::size_t, std::string>> rejected;  // (line number, reason)
};

void to_json(json& j, const IngestResult& r);

// Directory-backed store:
//   traces.jsonl      append log of ingested records (base fields only)
//   enrichment.jsonl  append log of {trace_id, field, value}
//   clusters.json     latest clustering assignment
class TraceStore {
 public:
  explicit TraceStore(std::filesystem::path dir);

  IngestResult ingest(std::istream& in);
  IngestResult ingest_file(const std::filesystem::path& file);

  const TraceRecord* find(const std::string& trace_id) const;
  std::size_t size() const { return records_.size(); }
  // Snapshot sorted by trace_id.
  std::vector<TraceRecord> records() const;

  // Persists fields the stored record does not have yet. Returns how many
  // were added.
  std::size_t add_enrichment(const std::string& trace_id, const Enrichment& e);
  void set_clusters(const std::map<std::string, std::uint64_t>& assignment, double theta);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void load();

  std::filesystem::path dir_;
  std::vector<TraceRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  mutable std::mutex mu_;
};

// Lookup source for one enrichment field.
class EnrichmentProvider {
 public:
  virtual ~EnrichmentProvider() = default;
  virtual std::string name() const = 0;
  virtual EnrichField field() const = 0;
  // nullopt when the provider has no answer; may throw.
  virtual std::optional<std::string> lookup(const std::string& endpoint) const = 0;
};

// Offline CSV table "key,value". Keys are exact endpoints or /24-style
// prefixes written as "a.b.c.*"; an exact key wins.
class TableProvider : public EnrichmentProvider {
 public:
  TableProvider(EnrichField field, const std::filesystem::path& table);
  TableProvider(EnrichField field, std::map<std::string, std::string> table);
  std::string name() const override { return std::string(to_string(field_)) + "-table"; }
  EnrichField field() const override { return field_; }
  std::optional<std::string> lookup(const std::string& endpoint) const override;

 private:
  EnrichField field_;
  std::map<std::string, std::string> table_;
};

using ProviderSet = std::vector<std::shared_ptr<const EnrichmentProvider>>;

// {"geo": "geo.csv", ...}; relative paths resolve against the config file.
ProviderSet load_providers(const std::filesystem::path& config);

struct EnrichStats {
  std::map<std::string, std::uint64_t> answered;
  std::map<std::string, std::uint64_t> errors;
  std::map<std::string, std::uint64_t> timeouts;
};

void to_json(json& j, const EnrichStats& s);

// Asks every provider concurrently, each bounded by `timeout`. A provider
// that throws or times out leaves its field absent and is counted. Fields
// already present are never replaced. Throws ValidationError if two
// providers own the same field.
TraceRecord enrich(const TraceRecord& r, const ProviderSet& providers, std::chrono::milliseconds timeout,
                   EnrichStats* stats = nullptr);

// First three labels of a dotted IPv4 address; other endpoints are their
// own prefix.
std::string endpoint_prefix(const std::string& endpoint);
double similarity(const TraceRecord& a, const TraceRecord& b);

struct Clustering {
  std::map<std::string, std::uint64_t> assignment;  // trace_id -> cluster id
  std::vector<std::string> founders;                // index = cluster id
  bool operator==(const Clustering&) const = default;
};

// Greedy threshold clustering in trace_id order. Throws ValidationError for
// theta outside [0, 1] or an empty input.
Clustering cluster(std::span<const TraceRecord> records, double theta);

struct CorrelateConfig {
  std::optional<std::string> sim_epoch;  // wall-clock instant of SimTime 0
  std::uint64_t window_ms = 3'600'000;
  double min_score = 0.25;
};

struct TimeEvidence {
  std::string trace_id;  // nearest record of the cluster
  std::int64_t delta_ms = 0;
  std::uint64_t window_ms = 0;
  double term = 0.0;
  bool operator==(const TimeEvidence&) const = default;
};

struct BehaviorEvidence {
  std::optional<AttackClass> alarm_class;
  std::vector<Behavior> matched;  // cluster tags compatible with the class
  double term = 0.0;
  bool operator==(const BehaviorEvidence&) const = default;
};

struct ClusterMatch {
  std::uint64_t cluster_id = 0;
  double score = 0.0;
  TimeEvidence time;
  BehaviorEvidence behavior;
  bool operator==(const ClusterMatch&) const = default;
};

struct AttributionReport {
  std::size_t alarm_ref = 0;  // position in the alarm list
  Alarm alarm;
  std::vector<ClusterMatch> matches;  // best first
  bool operator==(const AttributionReport&) const = default;
};

std::vector<Behavior> compatible_behaviors(std::optional<AttackClass> c);
double time_term(std::int64_t delta_ms, std::uint64_t window_ms);
double match_score(double time_term, double behavior_term);
// Recomputes a match's score from its evidence alone.
double recompute_score(const ClusterMatch& m);

// Records need a cluster_id. Throws ValidationError when the alarm clock
// cannot be mapped to wall-clock time.
std::vector<AttributionReport> correlate(std::span<const Alarm> alarms, std::span<const TraceRecord> records,
                                         const CorrelateConfig& cfg);

void to_json(json& j, const ClusterMatch& m);
void from_json(const json& j, ClusterMatch& m);
void to_json(json& j, const AttributionReport& r);
void from_json(const json& j, AttributionReport& r);

// Synthetic honeypot traces for a run: a handful per truth interval, tagged
// with behaviors of its class and observed inside it, plus unrelated noise.
std::vector<json> generate_traces(std::span<const TruthInterval> truth, const std::string& sim_epoch,
                                  SimTime horizon, std::uint64_t seed, std::size_t per_attack = 5,
                                  std::size_t noise = 20);

}  // namespace mobisec
