#pragma once

// Interaction data: ingestion, preprocessing, category preferences and the
// synthetic / semi-synthetic dataset builders.

#include "d3rec/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace d3rec {

struct RawEvent {
  std::string user_id;
  std::string item_id;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;
};

/// Item -> category distribution. Each row is a probability vector with
/// equal mass on the categories the item belongs to.
struct ItemCategoryMatrix {
  Tensor2 F;
  std::vector<std::string> category_names;

  Index n_items() const { return F.rows(); }
  Index n_categories() const { return F.cols(); }

  /// Rescales every nonzero row to sum to one. Zero rows stay zero.
  void normalize_rows() {
    for (Index i = 0; i < F.rows(); ++i) {
      const double s = F.row(i).sum();
      if (s > 0.0) F.row(i) /= s;
    }
  }
};

enum class Split : std::uint8_t { unsplit = 0, train = 1, valid = 2, test = 3 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    default: return "unsplit";
  }
}

/// Bit set over Split values.
using SplitMask = unsigned;
constexpr SplitMask mask_of(Split s) { return 1u << static_cast<unsigned>(s); }
inline constexpr SplitMask kTrain = mask_of(Split::train);
inline constexpr SplitMask kValid = mask_of(Split::valid);
inline constexpr SplitMask kTest = mask_of(Split::test);
inline constexpr SplitMask kUnsplit = mask_of(Split::unsplit);
inline constexpr SplitMask kAll = kTrain | kValid | kTest | kUnsplit;
constexpr bool contains(SplitMask m, Split s) { return (m & mask_of(s)) != 0; }

struct Interaction {
  Index user = 0;
  Index item = 0;
  std::int64_t timestamp = 0;
  Index order = 0;  // ingestion sequence, breaks timestamp ties
  Split split = Split::unsplit;
};

struct InteractionDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  ItemCategoryMatrix categories;
  /// Canonical order: by (user, timestamp, order).
  std::vector<Interaction> interactions;
  std::uint64_t seed = 0;

  Index n_users() const { return static_cast<Index>(user_ids.size()); }
  Index n_items() const { return static_cast<Index>(item_ids.size()); }
  Index n_categories() const { return categories.n_categories(); }
  const Tensor2& F() const { return categories.F; }

  std::size_t count(SplitMask mask) const {
    return static_cast<std::size_t>(std::count_if(
        interactions.begin(), interactions.end(),
        [mask](const Interaction& it) { return contains(mask, it.split); }));
  }
};

inline void canonicalize(InteractionDataset& ds) {
  std::stable_sort(ds.interactions.begin(), ds.interactions.end(),
                   [](const Interaction& a, const Interaction& b) {
                     if (a.user != b.user) return a.user < b.user;
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.order < b.order;
                   });
}

/// Per-user item lists restricted to `mask`, in canonical order.
inline std::vector<std::vector<Index>> items_by_user(const InteractionDataset& ds, SplitMask mask) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(ds.n_users()));
  for (const auto& it : ds.interactions)
    if (contains(mask, it.split)) out[static_cast<std::size_t>(it.user)].push_back(it.item);
  return out;
}

inline Vector indicator(const std::vector<Index>& items, Index n_items) {
  Vector x = Vector::Zero(n_items);
  for (Index i : items) x[i] = 1.0;
  return x;
}

// ---------------------------------------------------------------------------
// Ingestion

struct LoadReport {
  std::size_t events = 0;
  std::size_t duplicates = 0;
  std::size_t dropped_events = 0;  // events on rejected items
  std::vector<std::string> rejected_items;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline bool skip_line(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace detail

inline std::vector<RawEvent> parse_events(std::istream& in, const std::string& source = "events") {
  std::vector<RawEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = detail::split_tabs(line);
    if (fields.size() < 2 || fields.size() > 4)
      throw ParseError(source, lineno, "expected 2 to 4 tab-separated fields");
    RawEvent ev;
    ev.user_id = std::string(detail::trim(fields[0]));
    ev.item_id = std::string(detail::trim(fields[1]));
    if (ev.user_id.empty() || ev.item_id.empty()) throw ParseError(source, lineno, "missing user or item id");
    if (fields.size() >= 3 && !detail::trim(fields[2]).empty()) {
      const std::string text(detail::trim(fields[2]));
      std::size_t used = 0;
      double r = 0;
      try {
        r = std::stod(text, &used);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "bad rating '" + text + "'");
      }
      if (used != text.size() || !std::isfinite(r)) throw ParseError(source, lineno, "bad rating '" + text + "'");
      ev.rating = r;
    }
    if (fields.size() == 4 && !detail::trim(fields[3]).empty()) {
      const std::string text(detail::trim(fields[3]));
      std::size_t used = 0;
      long long ts = 0;
      try {
        ts = std::stoll(text, &used);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "bad timestamp '" + text + "'");
      }
      if (used != text.size()) throw ParseError(source, lineno, "bad timestamp '" + text + "'");
      ev.timestamp = ts;
    }
    events.push_back(std::move(ev));
  }
  return events;
}

using ItemCategoryList = std::vector<std::pair<std::string, std::vector<std::string>>>;

inline ItemCategoryList parse_categories(std::istream& in, const std::string& source = "categories") {
  ItemCategoryList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skip_line(line)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = detail::split_tabs(line);
    if (fields.size() > 2) throw ParseError(source, lineno, "expected item_id<TAB>cat1|cat2|...");
    const std::string item(detail::trim(fields[0]));
    if (item.empty()) throw ParseError(source, lineno, "missing item id");
    std::vector<std::string> cats;
    if (fields.size() == 2) {
      std::string_view rest = fields[1];
      std::size_t start = 0;
      while (start <= rest.size()) {
        auto pos = rest.find('|', start);
        if (pos == std::string_view::npos) pos = rest.size();
        const auto name = detail::trim(rest.substr(start, pos - start));
        if (!name.empty() && std::find(cats.begin(), cats.end(), name) == cats.end())
          cats.emplace_back(name);
        start = pos + 1;
      }
    }
    out.emplace_back(item, std::move(cats));
  }
  return out;
}

inline std::vector<RawEvent> read_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open events file " + path);
  return parse_events(in, path);
}

inline ItemCategoryList read_categories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open categories file " + path);
  return parse_categories(in, path);
}

/// Assembles an unsplit dataset. Users and items are indexed in order of first
/// appearance; items without categories are rejected and listed in the report.
inline InteractionDataset build_dataset(const std::vector<RawEvent>& events, const ItemCategoryList& item_categories,
                                        LoadReport* report = nullptr) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = LoadReport{};
  rep.events = events.size();

  std::unordered_map<std::string, const std::vector<std::string>*> cats_of;
  for (const auto& [item, cats] : item_categories) cats_of[item] = &cats;

  InteractionDataset ds;
  std::unordered_map<std::string, Index> user_index, item_index;
  std::set<std::string> rejected;
  std::set<std::pair<Index, Index>> seen;
  Index order = 0;
  for (const auto& ev : events) {
    const auto c = cats_of.find(ev.item_id);
    if (c == cats_of.end() || c->second->empty()) {
      if (rejected.insert(ev.item_id).second) rep.rejected_items.push_back(ev.item_id);
      ++rep.dropped_events;
      continue;
    }
    auto [uit, unew] = user_index.try_emplace(ev.user_id, ds.n_users());
    if (unew) ds.user_ids.push_back(ev.user_id);
    auto [iit, inew] = item_index.try_emplace(ev.item_id, ds.n_items());
    if (inew) ds.item_ids.push_back(ev.item_id);
    if (!seen.emplace(uit->second, iit->second).second) {
      ++rep.duplicates;
      continue;
    }
    Interaction it;
    it.user = uit->second;
    it.item = iit->second;
    it.order = order++;
    it.timestamp = ev.timestamp.value_or(0);
    ds.interactions.push_back(it);
  }

  std::unordered_map<std::string, Index> cat_index;
  for (const auto& item : ds.item_ids)
    for (const auto& name : *cats_of.at(item))
      if (cat_index.try_emplace(name, static_cast<Index>(ds.categories.category_names.size())).second)
        ds.categories.category_names.push_back(name);

  ds.categories.F = Tensor2::Zero(ds.n_items(), static_cast<Index>(ds.categories.category_names.size()));
  for (Index i = 0; i < ds.n_items(); ++i)
    for (const auto& name : *cats_of.at(ds.item_ids[static_cast<std::size_t>(i)]))
      ds.categories.F(i, cat_index.at(name)) = 1.0;
  ds.categories.normalize_rows();
  canonicalize(ds);
  return ds;
}

inline InteractionDataset load_interactions(const std::string& events_path, const std::string& categories_path,
                                            LoadReport* report = nullptr) {
  return build_dataset(read_events(events_path), read_categories(categories_path), report);
}

/// Keeps events rated strictly above `threshold`; ratingless events are positives.
inline std::vector<RawEvent> binarize_above(const std::vector<RawEvent>& events, double threshold) {
  std::vector<RawEvent> out;
  out.reserve(events.size());
  for (const auto& ev : events)
    if (!ev.rating || *ev.rating > threshold) out.push_back(ev);
  return out;
}

/// Keeps ratings above the middle of the [1, scale_max] scale: >3 of 5, >5.5 of 10.
inline std::vector<RawEvent> binarize(const std::vector<RawEvent>& events, double scale_max) {
  if (!(scale_max > 0.0) || !std::isfinite(scale_max)) throw ConfigError("scale_max must be positive");
  return binarize_above(events, (1.0 + scale_max) / 2.0);
}

// ---------------------------------------------------------------------------
// Filtering and splitting

/// Restricts a dataset to the kept users / items / categories and reindexes.
/// Item rows are renormalized over the surviving categories; items that lose
/// every category are dropped along with their interactions.
inline InteractionDataset subset(const InteractionDataset& ds, const std::vector<bool>& keep_user,
                                 std::vector<bool> keep_item, const std::vector<bool>& keep_cat) {
  const Tensor2& F = ds.F();
  for (Index i = 0; i < ds.n_items(); ++i) {
    if (!keep_item[static_cast<std::size_t>(i)]) continue;
    bool any = false;
    for (Index c = 0; c < F.cols(); ++c) any = any || (keep_cat[static_cast<std::size_t>(c)] && F(i, c) > 0.0);
    if (!any) keep_item[static_cast<std::size_t>(i)] = false;
  }
  auto remap = [](const std::vector<bool>& keep) {
    std::vector<Index> m(keep.size(), -1);
    Index next = 0;
    for (std::size_t k = 0; k < keep.size(); ++k)
      if (keep[k]) m[k] = next++;
    return std::make_pair(m, next);
  };
  const auto [umap, nu] = remap(keep_user);
  const auto [imap, ni] = remap(keep_item);
  const auto [cmap, nc] = remap(keep_cat);

  InteractionDataset out;
  out.seed = ds.seed;
  for (std::size_t u = 0; u < keep_user.size(); ++u)
    if (keep_user[u]) out.user_ids.push_back(ds.user_ids[u]);
  for (std::size_t i = 0; i < keep_item.size(); ++i)
    if (keep_item[i]) out.item_ids.push_back(ds.item_ids[i]);
  for (std::size_t c = 0; c < keep_cat.size(); ++c)
    if (keep_cat[c]) out.categories.category_names.push_back(ds.categories.category_names[c]);
  out.categories.F = Tensor2::Zero(ni, nc);
  for (Index i = 0; i < ds.n_items(); ++i) {
    if (imap[static_cast<std::size_t>(i)] < 0) continue;
    for (Index c = 0; c < F.cols(); ++c)
      if (cmap[static_cast<std::size_t>(c)] >= 0)
        out.categories.F(imap[static_cast<std::size_t>(i)], cmap[static_cast<std::size_t>(c)]) = F(i, c);
  }
  out.categories.normalize_rows();
  for (const auto& it : ds.interactions) {
    const Index u = umap[static_cast<std::size_t>(it.user)];
    const Index i = imap[static_cast<std::size_t>(it.item)];
    if (u < 0 || i < 0) continue;
    Interaction copy = it;
    copy.user = u;
    copy.item = i;
    out.interactions.push_back(copy);
  }
  return out;
}

/// Peels users, items and categories with fewer than k interactions until a
/// fixpoint. A category's count is the number of interactions whose item has
/// mass on it.
inline InteractionDataset k_core_filter(const InteractionDataset& ds, Index k) {
  if (k < 1) throw ConfigError("k_core must be >= 1");
  const auto nu = static_cast<std::size_t>(ds.n_users());
  const auto ni = static_cast<std::size_t>(ds.n_items());
  const auto nc = static_cast<std::size_t>(ds.n_categories());
  const Tensor2& F = ds.F();
  std::vector<bool> keep_user(nu, true), keep_item(ni, true), keep_cat(nc, true);

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<Index> udeg(nu, 0), ideg(ni, 0), cdeg(nc, 0);
    for (const auto& it : ds.interactions) {
      const auto u = static_cast<std::size_t>(it.user);
      const auto i = static_cast<std::size_t>(it.item);
      if (!keep_user[u] || !keep_item[i]) continue;
      ++udeg[u];
      ++ideg[i];
      for (std::size_t c = 0; c < nc; ++c)
        if (keep_cat[c] && F(it.item, static_cast<Index>(c)) > 0.0) ++cdeg[c];
    }
    auto peel = [&](std::vector<bool>& keep, const std::vector<Index>& deg) {
      for (std::size_t e = 0; e < keep.size(); ++e)
        if (keep[e] && deg[e] < k) {
          keep[e] = false;
          changed = true;
        }
    };
    peel(keep_user, udeg);
    peel(keep_item, ideg);
    peel(keep_cat, cdeg);
    for (std::size_t i = 0; i < ni; ++i) {
      if (!keep_item[i]) continue;
      bool any = false;
      for (std::size_t c = 0; c < nc; ++c) any = any || (keep_cat[c] && F(static_cast<Index>(i), static_cast<Index>(c)) > 0.0);
      if (!any) {
        keep_item[i] = false;
        changed = true;
      }
    }
  }
  InteractionDataset out = subset(ds, keep_user, keep_item, keep_cat);
  if (out.interactions.empty()) throw DataError("dataset annihilated by " + std::to_string(k) + "-core filter");
  return out;
}

/// Number of elements a ratio claims out of n, floored. The tiny bias absorbs
/// representation error such as 0.6 * 10 = 5.999...
inline std::size_t floor_share(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

enum class SplitOrder { chronological, shuffled };

/// Per-user train/valid/test split. Train and valid take floor(ratio * n);
/// the remainder goes to test.
inline InteractionDataset chronological_split(const InteractionDataset& ds, std::array<double, 3> ratios = {0.6, 0.2, 0.2},
                                              SplitOrder order = SplitOrder::chronological, std::uint64_t seed = 0) {
  for (double r : ratios)
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  InteractionDataset out = ds;
  canonicalize(out);
  Rng rng(seed);
  std::size_t begin = 0;
  auto& xs = out.interactions;
  while (begin < xs.size()) {
    std::size_t end = begin;
    while (end < xs.size() && xs[end].user == xs[begin].user) ++end;
    std::vector<std::size_t> pos(end - begin);
    std::iota(pos.begin(), pos.end(), begin);
    if (order == SplitOrder::shuffled) std::shuffle(pos.begin(), pos.end(), rng);
    const std::size_t n = pos.size();
    const std::size_t n_train = floor_share(ratios[0], n);
    const std::size_t n_valid = std::min(n - n_train, floor_share(ratios[1], n));
    for (std::size_t r = 0; r < n; ++r)
      xs[pos[r]].split = r < n_train ? Split::train : (r < n_train + n_valid ? Split::valid : Split::test);
    begin = end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Category preferences

/// y = F^T x / ||F^T x||_1; the all-zero vector for an empty history.
inline Vector category_preference(const Vector& x, const Tensor2& F) {
  require(x.size() == F.rows(), "category_preference: history length does not match item count");
  Vector y = F.transpose() * x;
  const double s = y.sum();
  if (s > 0.0) y /= s;
  return y;
}

inline Vector category_preference(const std::vector<Index>& items, const Tensor2& F) {
  Vector y = Vector::Zero(F.cols());
  for (Index i : items) y += F.row(i).transpose();
  const double s = y.sum();
  if (s > 0.0) y /= s;
  return y;
}

/// Normalized Shannon entropy H(p)/log(n); 0 when n <= 1.
inline double normalized_entropy(const Vector& p) {
  if (p.size() <= 1) return 0.0;
  double h = 0.0;
  for (Index c = 0; c < p.size(); ++c)
    if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
  return h / std::log(static_cast<double>(p.size()));
}

/// Aggregate category distribution of all interactions in `mask`.
inline Vector aggregate_category_distribution(const InteractionDataset& ds, SplitMask mask) {
  Vector p = Vector::Zero(ds.n_categories());
  for (const auto& it : ds.interactions)
    if (contains(mask, it.split)) p += ds.F().row(it.item).transpose();
  const double s = p.sum();
  if (s > 0.0) p /= s;
  return p;
}

/// KL(p_test || p_train) over aggregate category distributions, with p_train
/// smoothed by kLogEps where it vanishes.
inline double category_kl(const InteractionDataset& ds) {
  const Vector p_train = aggregate_category_distribution(ds, kTrain);
  const Vector p_test = aggregate_category_distribution(ds, kTest);
  require(p_train.sum() > 0.0 && p_test.sum() > 0.0, "category_kl: train and test splits must be nonempty");
  double kl = 0.0;
  for (Index c = 0; c < p_test.size(); ++c)
    if (p_test[c] > 0.0) kl += p_test[c] * std::log(p_test[c] / std::max(p_train[c], kLogEps));
  return kl;
}

inline double category_kl(const Vector& p_test, const Vector& p_train) {
  double kl = 0.0;
  for (Index c = 0; c < p_test.size(); ++c)
    if (p_test[c] > 0.0) kl += p_test[c] * std::log(p_test[c] / std::max(p_train[c], kLogEps));
  return kl;
}

// ---------------------------------------------------------------------------
// Semi-synthetic preference-shift protocol

struct SemiSyntheticResult {
  InteractionDataset dataset;
  Tensor2 target_prefs;  // n_users x n_categories, row u = preference of u's test items
  std::size_t dropped_users = 0;
};

/// Number of bottom categories selected out of `consumed`.
inline std::size_t bottom_category_count(std::size_t consumed, double fraction = 0.3) {
  return std::max<std::size_t>(1, floor_share(fraction, consumed));
}

/// Per user: the least-consumed 30% of categories define the test items, the
/// rest is split chronologically 80/20 into train/valid. Users left with an
/// empty test or empty train set are dropped.
inline SemiSyntheticResult build_semi_synthetic(const InteractionDataset& ds, double fraction = 0.3,
                                                double train_ratio = 0.8) {
  InteractionDataset work = ds;
  canonicalize(work);
  const Tensor2& F = work.F();
  const Index nc = work.n_categories();
  std::vector<bool> keep_user(static_cast<std::size_t>(work.n_users()), false);

  auto& xs = work.interactions;
  std::size_t begin = 0;
  while (begin < xs.size()) {
    std::size_t end = begin;
    while (end < xs.size() && xs[end].user == xs[begin].user) ++end;
    Vector mass = Vector::Zero(nc);
    for (std::size_t r = begin; r < end; ++r) mass += F.row(xs[r].item).transpose();
    std::vector<Index> consumed;
    for (Index c = 0; c < nc; ++c)
      if (mass[c] > 0.0) consumed.push_back(c);
    std::stable_sort(consumed.begin(), consumed.end(), [&](Index a, Index b) { return mass[a] < mass[b]; });
    consumed.resize(std::min(consumed.size(), bottom_category_count(consumed.size(), fraction)));

    std::vector<std::size_t> rest;
    std::size_t n_test = 0;
    for (std::size_t r = begin; r < end; ++r) {
      bool in_bottom = false;
      for (Index c : consumed) in_bottom = in_bottom || F(xs[r].item, c) > 0.0;
      if (in_bottom) {
        xs[r].split = Split::test;
        ++n_test;
      } else {
        rest.push_back(r);
      }
    }
    const std::size_t n_train = floor_share(train_ratio, rest.size());
    for (std::size_t k = 0; k < rest.size(); ++k) xs[rest[k]].split = k < n_train ? Split::train : Split::valid;
    keep_user[static_cast<std::size_t>(xs[begin].user)] = n_test > 0 && n_train > 0;
    begin = end;
  }

  SemiSyntheticResult result;
  result.dropped_users = static_cast<std::size_t>(std::count(keep_user.begin(), keep_user.end(), false));
  result.dataset = subset(work, keep_user, std::vector<bool>(static_cast<std::size_t>(work.n_items()), true),
                          std::vector<bool>(static_cast<std::size_t>(nc), true));
  const auto test_items = items_by_user(result.dataset, kTest);
  result.target_prefs = Tensor2::Zero(result.dataset.n_users(), result.dataset.n_categories());
  for (Index u = 0; u < result.dataset.n_users(); ++u)
    result.target_prefs.row(u) = category_preference(test_items[static_cast<std::size_t>(u)], result.dataset.F()).transpose();
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  Index n_users = 500;
  Index n_items = 300;
  Index n_categories = 6;
  double concentration = 0.3;
  Index interactions_per_user = 40;
  std::uint64_t seed = 7;
};

inline void validate(const SyntheticSpec& spec) {
  if (spec.n_users <= 0 || spec.n_items <= 0 || spec.n_categories <= 0 || spec.interactions_per_user <= 0)
    throw ConfigError("synthetic spec sizes must be positive");
  if (!(spec.concentration > 0.0)) throw ConfigError("synthetic concentration must be positive");
  if (spec.n_items < spec.n_categories) throw ConfigError("synthetic spec needs n_items >= n_categories");
  if (spec.interactions_per_user >= spec.n_items)
    throw ConfigError("synthetic spec needs interactions_per_user < n_items");
}

/// Items are assigned to categories round-robin; each user draws a preference
/// from a symmetric Dirichlet and samples distinct items proportionally to it.
/// Timestamps follow sampling order.
inline InteractionDataset generate_toy(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  InteractionDataset ds;
  ds.seed = spec.seed;
  for (Index u = 0; u < spec.n_users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
  for (Index i = 0; i < spec.n_items; ++i) ds.item_ids.push_back("i" + std::to_string(i));
  for (Index c = 0; c < spec.n_categories; ++c) ds.categories.category_names.push_back("cat" + std::to_string(c));
  ds.categories.F = Tensor2::Zero(spec.n_items, spec.n_categories);
  for (Index i = 0; i < spec.n_items; ++i) ds.categories.F(i, i % spec.n_categories) = 1.0;

  std::gamma_distribution<double> gamma(spec.concentration, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Index order = 0;
  std::vector<double> weight(static_cast<std::size_t>(spec.n_items));
  for (Index u = 0; u < spec.n_users; ++u) {
    Vector pref(spec.n_categories);
    for (Index c = 0; c < spec.n_categories; ++c) pref[c] = gamma(rng);
    if (pref.sum() > 0.0) pref /= pref.sum();
    else pref.setConstant(1.0 / static_cast<double>(spec.n_categories));
    // floor keeps every item reachable when a preference underflows
    for (Index i = 0; i < spec.n_items; ++i)
      weight[static_cast<std::size_t>(i)] = pref[i % spec.n_categories] + 1e-12;
    for (Index k = 0; k < spec.interactions_per_user; ++k) {
      double total = 0.0;
      for (double w : weight) total += w;
      double target = unif(rng) * total;
      std::size_t pick = 0;
      for (std::size_t i = 0; i < weight.size(); ++i) {
        if (weight[i] <= 0.0) continue;
        pick = i;
        target -= weight[i];
        if (target < 0.0) break;
      }
      weight[pick] = 0.0;
      ds.interactions.push_back(Interaction{u, static_cast<Index>(pick), k, order++, Split::unsplit});
    }
  }
  canonicalize(ds);
  return ds;
}

/// Adds floor(ratio * #train) random never-interacted items per user as
/// false-positive train interactions.
inline InteractionDataset inject_noise(const InteractionDataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio must lie in [0, 1]");
  InteractionDataset out = ds;
  if (ratio == 0.0) return out;
  Rng rng(seed);
  const auto all_items = items_by_user(ds, kAll);
  const auto train_items = items_by_user(ds, kTrain);
  Index order = 0;
  std::vector<std::int64_t> last_ts(static_cast<std::size_t>(ds.n_users()), 0);
  for (const auto& it : ds.interactions) {
    order = std::max(order, it.order + 1);
    if (it.split == Split::train)
      last_ts[static_cast<std::size_t>(it.user)] = std::max(last_ts[static_cast<std::size_t>(it.user)], it.timestamp);
  }
  for (Index u = 0; u < ds.n_users(); ++u) {
    const auto su = static_cast<std::size_t>(u);
    const std::size_t m = floor_share(ratio, train_items[su].size());
    if (m == 0) continue;
    std::vector<bool> used(static_cast<std::size_t>(ds.n_items()), false);
    for (Index i : all_items[su]) used[static_cast<std::size_t>(i)] = true;
    std::vector<Index> candidates;
    for (Index i = 0; i < ds.n_items(); ++i)
      if (!used[static_cast<std::size_t>(i)]) candidates.push_back(i);
    const std::size_t take = std::min(m, candidates.size());
    for (std::size_t k = 0; k < take; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
      std::swap(candidates[k], candidates[pick(rng)]);
      out.interactions.push_back(Interaction{u, candidates[k], last_ts[su], order++, Split::train});
    }
  }
  canonicalize(out);
  return out;
}

}  // namespace d3rec
