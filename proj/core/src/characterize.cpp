#include "plbench/characterize.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "plbench/error.hpp"

namespace plbench {
namespace {

// First annotation of each distinct user per triple.
TripleGroups first_annotations(const PreferenceDataset& dataset) {
  TripleGroups groups = group_by_triple(dataset);
  for (auto& [id, anns] : groups) {
    std::vector<Annotation> firsts;
    for (const auto& a : anns) {
      bool seen = std::any_of(firsts.begin(), firsts.end(),
                              [&](const Annotation& f) { return f.user_id == a.user_id; });
      if (!seen) firsts.push_back(a);
    }
    anns = std::move(firsts);
  }
  return groups;
}

struct Counts {
  std::size_t ones = 0;
  std::size_t total = 0;
};

Counts count(std::span<const Annotation> anns) {
  Counts c;
  for (const auto& a : anns) {
    c.ones += a.label == 1 ? 1 : 0;
    c.total += 1;
  }
  return c;
}

std::string fmt(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "unavailable";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.0f%%", 100.0 * *v);
  return buf;
}

}  // namespace

std::optional<double> divergence_rate(const PreferenceDataset& dataset) {
  std::size_t multi = 0;
  std::size_t divergent = 0;
  for (const auto& [id, anns] : first_annotations(dataset)) {
    if (anns.size() < 2) continue;
    ++multi;
    Counts c = count(anns);
    if (c.ones != 0 && c.ones != c.total) ++divergent;
  }
  if (multi == 0) return std::nullopt;
  return static_cast<double>(divergent) / static_cast<double>(multi);
}

std::optional<double> high_divergence_rate(const PreferenceDataset& dataset, double threshold) {
  std::size_t multi = 0;
  std::size_t high = 0;
  for (const auto& [id, anns] : first_annotations(dataset)) {
    if (anns.size() < 2) continue;
    ++multi;
    Counts c = count(anns);
    std::size_t minority = std::min(c.ones, c.total - c.ones);
    // minority / total >= threshold, compared without dividing.
    if (minority > 0 &&
        static_cast<double>(minority) >= threshold * static_cast<double>(c.total) - 1e-12) {
      ++high;
    }
  }
  if (multi == 0) return std::nullopt;
  return static_cast<double>(high) / static_cast<double>(multi);
}

std::optional<int> majority_label(std::span<const Annotation> annotations) {
  if (annotations.empty()) throw UsageError("majority_label: empty annotation list");
  Counts c = count(annotations);
  std::size_t zeros = c.total - c.ones;
  if (c.ones > zeros) return 1;
  if (zeros > c.ones) return 0;
  return std::nullopt;
}

std::map<std::string, std::optional<double>> mv_accuracy(const PreferenceDataset& dataset) {
  std::map<std::string, std::pair<double, std::size_t>> credit;
  for (const auto& [id, anns] : first_annotations(dataset)) {
    if (anns.size() < 2) continue;
    auto majority = majority_label(anns);
    for (const auto& a : anns) {
      auto& [sum, n] = credit[a.user_id];
      sum += majority ? (a.label == *majority ? 1.0 : 0.0) : 0.5;
      n += 1;
    }
  }
  std::map<std::string, std::optional<double>> out;
  for (const auto& user : dataset.users()) {
    auto it = credit.find(user);
    if (it == credit.end() || it->second.second == 0) {
      out[user] = std::nullopt;
    } else {
      out[user] = it->second.first / static_cast<double>(it->second.second);
    }
  }
  return out;
}

std::map<std::string, std::optional<double>> consistency_estimate(
    const PreferenceDataset& dataset) {
  // (triple, user) -> label counts
  std::map<std::pair<std::string, std::string>, std::array<std::size_t, 2>> by_key;
  for (const auto& r : dataset.records()) by_key[{r.triple_id, r.user_id}][r.label] += 1;
  std::map<std::string, std::pair<double, double>> pairs;  // agreeing, total
  for (const auto& [key, c] : by_key) {
    double n = static_cast<double>(c[0] + c[1]);
    if (n < 2) continue;
    auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
    auto& [agree, total] = pairs[key.second];
    agree += choose2(static_cast<double>(c[0])) + choose2(static_cast<double>(c[1]));
    total += choose2(n);
  }
  std::map<std::string, std::optional<double>> out;
  for (const auto& user : dataset.users()) {
    auto it = pairs.find(user);
    if (it == pairs.end()) {
      out[user] = std::nullopt;
    } else {
      out[user] = it->second.first / it->second.second;
    }
  }
  return out;
}

std::set<std::string> minority_users(const DatasetProfile& profile, double cutoff) {
  std::set<std::string> out;
  for (const auto& [user, acc] : profile.mv_acc) {
    if (acc && *acc < cutoff) out.insert(user);
  }
  return out;
}

std::optional<double> room_for_personalization(const DatasetProfile& profile) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [user, acc] : profile.mv_acc) {
    auto it = profile.consistency.find(user);
    if (!acc || it == profile.consistency.end() || !it->second) continue;
    sum += *it->second - *acc;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return std::clamp(sum / static_cast<double>(n), -1.0, 1.0);
}

DatasetProfile profile_dataset(const PreferenceDataset& dataset, double threshold,
                               double minority_cutoff) {
  DatasetProfile p;
  p.divergence_rate = divergence_rate(dataset);
  p.high_divergence_rate = high_divergence_rate(dataset, threshold);
  p.high_divergence_threshold = threshold;
  p.mv_acc = mv_accuracy(dataset);
  p.minority_users = minority_users(p, minority_cutoff);
  p.consistency = consistency_estimate(dataset);
  p.room = room_for_personalization(p);
  p.n_records = dataset.size();
  p.n_users = dataset.users().size();
  std::set<std::string> triples;
  for (const auto& r : dataset.records()) triples.insert(r.triple_id);
  p.n_triples = triples.size();
  return p;
}

Json to_json(const DatasetProfile& p) {
  auto opt = [](const std::optional<double>& v) -> Json { return v ? Json(*v) : Json("unavailable"); };
  Json j;
  j["n_records"] = p.n_records;
  j["n_triples"] = p.n_triples;
  j["n_users"] = p.n_users;
  j["divergence_rate"] = opt(p.divergence_rate);
  j["high_divergence_rate"] = opt(p.high_divergence_rate);
  j["high_divergence_threshold"] = p.high_divergence_threshold;
  Json mv = Json::object();
  for (const auto& [u, v] : p.mv_acc) mv[u] = opt(v);
  j["mv_acc"] = std::move(mv);
  j["minority_users"] = p.minority_users;
  Json cons = Json::object();
  for (const auto& [u, v] : p.consistency) cons[u] = opt(v);
  j["consistency"] = std::move(cons);
  j["room"] = opt(p.room);
  return j;
}

std::string render_profile_table(const std::string& name, const DatasetProfile& p) {
  double lo = 1.0;
  double hi = 0.0;
  bool any_mv = false;
  for (const auto& [u, v] : p.mv_acc) {
    if (!v) continue;
    any_mv = true;
    lo = std::min(lo, *v);
    hi = std::max(hi, *v);
  }
  double cons_sum = 0.0;
  std::size_t cons_n = 0;
  for (const auto& [u, v] : p.consistency) {
    if (v) {
      cons_sum += *v;
      ++cons_n;
    }
  }
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %9s %7s %8s %14s %14s %12s %8s\n", "dataset",
                "#samples", "#users", "%Div.", "%Highly Div.", "MV-ACC range", "Consistency",
                "Room");
  out << line;
  std::string range = any_mv ? "[" + fmt(lo) + "--" + fmt(hi) + "]" : "unavailable";
  std::string cons = cons_n ? fmt(cons_sum / static_cast<double>(cons_n)) : "-";
  std::string room = p.room ? fmt(*p.room) : "-";
  std::snprintf(line, sizeof(line), "%-14s %9zu %7zu %8s %14s %14s %12s %8s\n", name.c_str(),
                p.n_records, p.n_users, percent(p.divergence_rate).c_str(),
                percent(p.high_divergence_rate).c_str(), range.c_str(), cons.c_str(),
                room.c_str());
  out << line << "\n";
  std::snprintf(line, sizeof(line), "  %-10s %8s %12s %9s\n", "user", "MV-ACC", "consistency",
                "minority");
  out << line;
  for (const auto& [u, v] : p.mv_acc) {
    auto c = p.consistency.count(u) ? p.consistency.at(u) : std::nullopt;
    std::snprintf(line, sizeof(line), "  %-10s %8s %12s %9s\n", u.c_str(),
                  v ? fmt(*v, 3).c_str() : "-", c ? fmt(*c, 3).c_str() : "-",
                  p.minority_users.count(u) ? "yes" : "");
    out << line;
  }
  return out.str();
}

}  // namespace plbench
