#include "pah/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pah/errors.hpp"

namespace pah {

double cosine_similarity(std::span<const double> q, std::span<const double> g) {
  if (q.size() != g.size()) throw DimensionError("cosine_similarity: length mismatch");
  double dot = 0.0, qq = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += q[i] * g[i];
    qq += q[i] * q[i];
    gg += g[i] * g[i];
  }
  if (qq == 0.0 || gg == 0.0) throw DegenerateDescriptorError("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(qq) * std::sqrt(gg)), -1.0, 1.0);
}

std::vector<RankedItem> rank_by_similarity(std::span<const double> similarities) {
  std::vector<RankedItem> items(similarities.size());
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = {i, similarities[i]};
  std::stable_sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.similarity > b.similarity;
  });
  return items;
}

std::vector<RankedItem> rank_gallery(const Descriptor& query, std::span<const Descriptor> gallery) {
  if (gallery.empty()) throw ContractError("rank_gallery: empty gallery");
  std::vector<double> sims(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    sims[i] = cosine_similarity(query.f_final, gallery[i].f_final);
  }
  return rank_by_similarity(sims);
}

double cmc_rank_k(const RankingTable& rankings, std::span<const int> query_ids, std::size_t k) {
  if (k == 0) throw ContractError("cmc_rank_k: k must be >= 1");
  if (rankings.size() != query_ids.size()) throw DimensionError("cmc_rank_k: query count mismatch");
  if (rankings.empty()) throw UndefinedMetricError("cmc_rank_k: no queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const std::size_t top = std::min(k, rankings[q].size());
    for (std::size_t r = 0; r < top; ++r) {
      if (rankings[q][r] == query_ids[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

MapResult mean_average_precision(const RankingTable& rankings, std::span<const int> query_ids) {
  if (rankings.size() != query_ids.size()) {
    throw DimensionError("mean_average_precision: query count mismatch");
  }
  MapResult result;
  double total = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < rankings[q].size(); ++r) {
      if (rankings[q][r] != query_ids[q]) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) {
      ++result.excluded_queries;
      continue;
    }
    ++result.valid_queries;
    total += precision_sum / static_cast<double>(hits);
  }
  if (result.valid_queries == 0) {
    throw UndefinedMetricError("mean_average_precision: no query has a relevant gallery item");
  }
  result.value = total / static_cast<double>(result.valid_queries);
  return result;
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kGeneral: return "general";
    case Scenario::kSame: return "same";
    case Scenario::kCross: return "cross";
  }
  return "general";
}

Scenario parse_scenario(const std::string& text) {
  if (text == "general") return Scenario::kGeneral;
  if (text == "same") return Scenario::kSame;
  if (text == "cross") return Scenario::kCross;
  throw ConfigError("unknown scenario '" + text + "' (expected general, same or cross)");
}

bool scenario_keeps(Scenario s, const Descriptor& q, const Descriptor& g, bool exclude_same_sample) {
  if (exclude_same_sample && q.sample_id == g.sample_id) return false;
  if (q.identity != g.identity) return true;
  switch (s) {
    case Scenario::kGeneral: return true;
    case Scenario::kSame: return q.clothes_id == g.clothes_id;
    case Scenario::kCross: return q.clothes_id != g.clothes_id;
  }
  return true;
}

const ScenarioReport& EvalReport::at(Scenario s) const {
  for (const auto& r : scenarios) {
    if (r.scenario == s) return r;
  }
  throw ContractError("EvalReport: scenario " + scenario_name(s) + " not evaluated");
}

EvalReport evaluate(std::span<const Descriptor> queries, std::span<const Descriptor> gallery,
                    const EvalOptions& options) {
  if (queries.empty()) throw UndefinedMetricError("evaluate: no queries");
  if (gallery.empty()) throw ContractError("evaluate: empty gallery");
  if (options.k_max == 0) throw ContractError("evaluate: k_max must be >= 1");
  EvalReport report;
  report.num_queries = queries.size();
  report.num_gallery = gallery.size();

  std::vector<std::vector<RankedItem>> ranked(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) ranked[q] = rank_gallery(queries[q], gallery);

  for (Scenario s : options.scenarios) {
    RankingTable table;
    std::vector<int> ids;
    ScenarioReport sr;
    sr.scenario = s;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      std::vector<int> list;
      bool relevant = false;
      for (const auto& item : ranked[q]) {
        const Descriptor& g = gallery[item.index];
        if (!scenario_keeps(s, queries[q], g, options.exclude_same_sample)) continue;
        list.push_back(g.identity);
        relevant = relevant || g.identity == queries[q].identity;
      }
      if (!relevant) {
        ++sr.excluded_queries;
        continue;
      }
      table.push_back(std::move(list));
      ids.push_back(queries[q].identity);
    }
    sr.valid_queries = table.size();
    if (!table.empty()) {
      for (std::size_t k = 1; k <= options.k_max; ++k) sr.cmc.push_back(cmc_rank_k(table, ids, k));
      sr.map = mean_average_precision(table, ids).value;
    }
    report.scenarios.push_back(std::move(sr));
  }
  return report;
}

Descriptor extract_descriptor(PahModel& model, const ImageSample& sample) {
  Tensor head_image;
  if (model.config().streams.head) head_image = crop_head(sample.pixels, sample.head_box).image;
  Tensor f = model.descriptor(sample.pixels, head_image);
  Descriptor d;
  d.f_final.assign(f.data().begin(), f.data().end());
  d.sample_id = sample.sample_id;
  d.identity = sample.identity;
  d.clothes_id = sample.clothes_id;
  d.camera_id = sample.camera_id;
  return d;
}

std::vector<Descriptor> extract_descriptors(PahModel& model, std::span<const ImageSample> samples) {
  std::vector<Descriptor> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(extract_descriptor(model, s));
  return out;
}

EvalReport evaluate(PahModel& model, std::span<const ImageSample> queries,
                    std::span<const ImageSample> gallery, const EvalOptions& options) {
  const auto q = extract_descriptors(model, queries);
  const auto g = extract_descriptors(model, gallery);
  return evaluate(q, g, options);
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "split,metric,value\n";
  for (const auto& s : report.scenarios) {
    const std::string name = scenario_name(s.scenario);
    for (std::size_t k = 0; k < s.cmc.size(); ++k) {
      out << name << ",rank" << (k + 1) << ',' << num(s.cmc[k]) << '\n';
    }
    if (s.valid_queries > 0) out << name << ",mAP," << num(s.map) << '\n';
    out << name << ",valid_queries," << s.valid_queries << '\n';
    out << name << ",excluded_queries," << s.excluded_queries << '\n';
  }
  out << "all,num_queries," << report.num_queries << '\n';
  out << "all,num_gallery," << report.num_gallery << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "queries %zu  gallery %zu\n", report.num_queries,
                report.num_gallery);
  os << line;
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %8s\n", "split", "rank1", "rank5", "rank10",
                "mAP", "queries");
  os << line;
  auto rank = [](const ScenarioReport& s, std::size_t k) {
    return s.cmc.empty() ? 0.0 : s.cmc[std::min(k, s.cmc.size()) - 1];
  };
  for (const auto& s : report.scenarios) {
    std::snprintf(line, sizeof line, "%-8s %8.4f %8.4f %8.4f %8.4f %8zu\n",
                  scenario_name(s.scenario).c_str(), rank(s, 1), rank(s, 5), rank(s, 10), s.map,
                  s.valid_queries);
    os << line;
  }
  return os.str();
}

}  // namespace pah
