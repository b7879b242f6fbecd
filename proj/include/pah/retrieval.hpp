#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pah/data.hpp"
#include "pah/model.hpp"

namespace pah {

struct Descriptor {
  std::vector<double> f_final;
  int sample_id = 0;
  int identity = 0;
  int clothes_id = 0;
  int camera_id = 0;
};

/// <q,g> / (|q| |g|). Throws DegenerateDescriptorError on a zero vector.
double cosine_similarity(std::span<const double> q, std::span<const double> g);

struct RankedItem {
  std::size_t index = 0;
  double similarity = 0.0;
};

/// Descending similarity, ties by ascending index.
std::vector<RankedItem> rank_by_similarity(std::span<const double> similarities);
std::vector<RankedItem> rank_gallery(const Descriptor& query, std::span<const Descriptor> gallery);

/// Per query, gallery identities in ranked order.
using RankingTable = std::vector<std::vector<int>>;

/// Fraction of queries with a same-identity item in the top k. k beyond a
/// list's length is clamped to it.
double cmc_rank_k(const RankingTable& rankings, std::span<const int> query_ids, std::size_t k);

struct MapResult {
  double value = 0.0;
  std::size_t valid_queries = 0;
  std::size_t excluded_queries = 0;  // no relevant gallery item
};

/// Mean of per-query average precision over queries with a relevant item.
/// Throws UndefinedMetricError when no query qualifies.
MapResult mean_average_precision(const RankingTable& rankings, std::span<const int> query_ids);

enum class Scenario { kGeneral, kSame, kCross };
std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& text);

/// Whether gallery item g takes part in ranking for query q. Different
/// identities always do; same-identity items are kept by clothes match
/// (same), clothes mismatch (cross) or always (general).
bool scenario_keeps(Scenario s, const Descriptor& q, const Descriptor& g, bool exclude_same_sample);

struct ScenarioReport {
  Scenario scenario = Scenario::kGeneral;
  std::vector<double> cmc;  // cmc[k-1] = Rank-k
  double map = 0.0;
  std::size_t valid_queries = 0;
  std::size_t excluded_queries = 0;
};

struct EvalReport {
  std::vector<ScenarioReport> scenarios;
  std::size_t num_queries = 0;
  std::size_t num_gallery = 0;

  const ScenarioReport& at(Scenario s) const;
};

struct EvalOptions {
  std::size_t k_max = 10;
  std::vector<Scenario> scenarios{Scenario::kGeneral, Scenario::kSame, Scenario::kCross};
  bool exclude_same_sample = false;
};

EvalReport evaluate(std::span<const Descriptor> queries, std::span<const Descriptor> gallery,
                    const EvalOptions& options = {});

/// Runs the model in inference mode on one sample (head crop included).
Descriptor extract_descriptor(PahModel& model, const ImageSample& sample);
std::vector<Descriptor> extract_descriptors(PahModel& model, std::span<const ImageSample> samples);

EvalReport evaluate(PahModel& model, std::span<const ImageSample> queries,
                    std::span<const ImageSample> gallery, const EvalOptions& options = {});

/// Rows of `split,metric,value`.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
std::string format_report(const EvalReport& report);

}  // namespace pah
