#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "objscope/binary_io.hpp"
#include "objscope/error.hpp"
#include "objscope/preprocess.hpp"

namespace objscope {

struct Transition {
  std::uint32_t input = 0;
  std::uint16_t action = 0;
  std::uint32_t successor = 0;

  auto operator<=>(const Transition&) const = default;
  bool operator==(const Transition&) const = default;
};

struct TransitionHash {
  std::size_t operator()(const Transition& t) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(t.input) << 32) ^ t.successor;
    h ^= static_cast<std::uint64_t>(t.action) * 0x9E3779B97F4A7C15ULL;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ULL;
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

struct TensorDims {
  std::uint32_t inputs = 0;   // |X|, also the successor dimension
  std::uint16_t actions = 0;  // |A|

  bool operator==(const TensorDims&) const = default;
};

struct CountEntry {
  Transition key;
  std::uint64_t count = 0;

  bool operator==(const CountEntry&) const = default;
};

// Sparse N_ijk with entries kept sorted by (i, j, k); absent key means zero.
class CountTensor {
 public:
  CountTensor() = default;
  explicit CountTensor(TensorDims dims) : dims_(dims) {}

  // Entries must be sorted, unique, nonzero and within dims.
  CountTensor(TensorDims dims, std::vector<CountEntry> entries) : dims_(dims), entries_(std::move(entries)) {
    for (std::size_t e = 0; e < entries_.size(); ++e) {
      const auto& [key, count] = entries_[e];
      check_in_range(key, e);
      if (count == 0) throw IntegrityError("count tensor: zero count stored at entry " + std::to_string(e));
      if (e > 0 && !(entries_[e - 1].key < key)) {
        throw IntegrityError("count tensor: entries not strictly ascending at " + std::to_string(e));
      }
      total_ += count;
    }
  }

  [[nodiscard]] const TensorDims& dims() const { return dims_; }
  [[nodiscard]] const std::vector<CountEntry>& entries() const { return entries_; }
  [[nodiscard]] std::uint64_t total() const { return total_; }
  [[nodiscard]] bool empty() const { return entries_.empty(); }

  [[nodiscard]] std::uint64_t count(const Transition& key) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                               [](const CountEntry& e, const Transition& k) { return e.key < k; });
    return (it != entries_.end() && it->key == key) ? it->count : 0;
  }

  bool operator==(const CountTensor&) const = default;

  void check_in_range(const Transition& key, std::size_t position) const {
    if (key.input >= dims_.inputs || key.successor >= dims_.inputs || key.action >= dims_.actions) {
      throw IntegrityError("transition (" + std::to_string(key.input) + "," + std::to_string(key.action) + "," +
                           std::to_string(key.successor) + ") at position " + std::to_string(position) +
                           " outside dims (" + std::to_string(dims_.inputs) + "," +
                           std::to_string(dims_.actions) + "," + std::to_string(dims_.inputs) + ")");
    }
  }

  void write(std::ostream& out) const {
    le::put_bytes(out, "AGTN", 4);
    le::put<std::uint16_t>(out, 1);
    le::put<std::uint32_t>(out, dims_.inputs);
    le::put<std::uint16_t>(out, dims_.actions);
    le::put<std::uint32_t>(out, dims_.inputs);
    le::put<std::uint64_t>(out, entries_.size());
    le::put<std::uint64_t>(out, total_);
    for (const auto& [key, count] : entries_) {
      le::put<std::uint32_t>(out, key.input);
      le::put<std::uint16_t>(out, key.action);
      le::put<std::uint32_t>(out, key.successor);
      le::put<std::uint64_t>(out, count);
    }
    le::check_stream(out, "count tensor");
  }

  static CountTensor read(std::istream& in) {
    le::expect_magic(in, "AGTN", "count tensor");
    le::expect_version(in, 1, "count tensor");
    TensorDims dims;
    dims.inputs = le::get<std::uint32_t>(in, "tensor dims");
    dims.actions = le::get<std::uint16_t>(in, "tensor dims");
    if (le::get<std::uint32_t>(in, "tensor dims") != dims.inputs) {
      throw IntegrityError("count tensor: input and successor dimensions differ");
    }
    const auto n = le::get<std::uint64_t>(in, "tensor entry count");
    const auto total = le::get<std::uint64_t>(in, "tensor total");
    std::vector<CountEntry> entries(n);
    for (auto& e : entries) {
      e.key.input = le::get<std::uint32_t>(in, "tensor entry");
      e.key.action = le::get<std::uint16_t>(in, "tensor entry");
      e.key.successor = le::get<std::uint32_t>(in, "tensor entry");
      e.count = le::get<std::uint64_t>(in, "tensor entry");
    }
    CountTensor t(dims, std::move(entries));
    if (t.total() != total) throw IntegrityError("count tensor: stored total disagrees with entries");
    return t;
  }

 private:
  TensorDims dims_;
  std::vector<CountEntry> entries_;
  std::uint64_t total_ = 0;
};

// Hash-map accumulator; finish() produces the sorted tensor.
class CountAccumulator {
 public:
  explicit CountAccumulator(TensorDims dims) : probe_(dims) {}

  void add(const Transition& t, std::uint64_t n = 1) {
    probe_.check_in_range(t, added_);
    counts_[t] += n;
    ++added_;
  }

  void merge(const CountAccumulator& other) {
    if (!(other.probe_.dims() == probe_.dims())) throw FormatError("cannot merge accumulators with different dims");
    for (const auto& [k, v] : other.counts_) counts_[k] += v;
  }

  [[nodiscard]] CountTensor finish() const {
    std::vector<CountEntry> entries;
    entries.reserve(counts_.size());
    for (const auto& [k, v] : counts_) entries.push_back({k, v});
    std::sort(entries.begin(), entries.end(), [](const CountEntry& a, const CountEntry& b) { return a.key < b.key; });
    return CountTensor(probe_.dims(), std::move(entries));
  }

 private:
  CountTensor probe_;
  std::unordered_map<Transition, std::uint64_t, TransitionHash> counts_;
  std::size_t added_ = 0;
};

template <typename Transitions>
CountTensor accumulate(const Transitions& stream, TensorDims dims) {
  CountAccumulator acc(dims);
  for (const Transition& t : stream) acc.add(t);
  return acc.finish();
}

// Pointwise sum; the monoid operation on tensors of equal dims.
inline CountTensor merge(const CountTensor& a, const CountTensor& b) {
  if (!(a.dims() == b.dims())) throw FormatError("merge: count tensors have different dims");
  std::vector<CountEntry> out;
  out.reserve(a.entries().size() + b.entries().size());
  auto ia = a.entries().begin();
  auto ib = b.entries().begin();
  while (ia != a.entries().end() || ib != b.entries().end()) {
    if (ib == b.entries().end() || (ia != a.entries().end() && ia->key < ib->key)) {
      out.push_back(*ia++);
    } else if (ia == a.entries().end() || ib->key < ia->key) {
      out.push_back(*ib++);
    } else {
      out.push_back({ia->key, ia->count + ib->count});
      ++ia;
      ++ib;
    }
  }
  return CountTensor(a.dims(), std::move(out));
}

// ---------------------------------------------------------------------------
// Step sequences -> transitions

// Whether a transition into a record flagged episode_start is counted. The
// default drops them: a reset successor is not caused by the action.
enum class ResetPolicy { exclude, include };

// One step of a trajectory reduced to its input index.
struct IndexedStep {
  std::uint32_t input = 0;
  std::uint16_t action = 0;
  bool episode_start = false;
};

// Counts transitions whose source step lies in [begin, end); looks ahead one
// step past `end`, so adjacent ranges partition the transitions exactly.
inline void accumulate_steps(std::span<const IndexedStep> steps, std::size_t begin, std::size_t end,
                             CountAccumulator& acc, ResetPolicy resets = ResetPolicy::exclude) {
  end = std::min(end, steps.size());
  for (std::size_t t = begin; t < end && t + 1 < steps.size(); ++t) {
    const auto& cur = steps[t];
    const auto& nxt = steps[t + 1];
    if (nxt.episode_start && resets == ResetPolicy::exclude) continue;
    acc.add({cur.input, cur.action, nxt.input});
  }
}

// Streaming variant keyed by digests, for pass 2 before the codebook exists.
struct DigestTransition {
  Digest input;
  Digest successor;
  std::uint16_t action = 0;

  bool operator==(const DigestTransition&) const = default;
};

struct DigestTransitionHash {
  std::size_t operator()(const DigestTransition& t) const noexcept {
    DigestHash h;
    std::size_t a = h(t.input);
    std::size_t b = h(t.successor);
    return a ^ (b * 0x9E3779B97F4A7C15ULL + t.action + (a << 6) + (a >> 2));
  }
};

class DigestTransitionCounter {
 public:
  explicit DigestTransitionCounter(ResetPolicy resets = ResetPolicy::exclude) : resets_(resets) {}

  void push(const Digest& digest, std::uint16_t action, bool episode_start) {
    if (has_prev_ && (!episode_start || resets_ == ResetPolicy::include)) {
      ++counts_[{prev_, digest, prev_action_}];
    }
    prev_ = digest;
    prev_action_ = action;
    has_prev_ = true;
    seen_.add(digest);
  }

  // Starts a new, unrelated stream (next file): no transition bridges it.
  void break_stream() { has_prev_ = false; }

  void merge(const DigestTransitionCounter& other) {
    for (const auto& [k, v] : other.counts_) counts_[k] += v;
    seen_.merge(other.seen_);
  }

  [[nodiscard]] const CodebookBuilder& digests() const { return seen_; }

  [[nodiscard]] CountTensor to_tensor(const Codebook& codebook, std::uint16_t actions) const {
    CountAccumulator acc({static_cast<std::uint32_t>(codebook.size()), actions});
    for (const auto& [k, v] : counts_) {
      acc.add({codebook.index_of(k.input), k.action, codebook.index_of(k.successor)}, v);
    }
    return acc.finish();
  }

 private:
  ResetPolicy resets_;
  std::unordered_map<DigestTransition, std::uint64_t, DigestTransitionHash> counts_;
  CodebookBuilder seen_;
  Digest prev_;
  std::uint16_t prev_action_ = 0;
  bool has_prev_ = false;
};

// ---------------------------------------------------------------------------
// Probabilities

struct ProbEntry {
  Transition key;
  double p = 0.0;
};

// P = N / sum(N). Keeps the counts so marginals and conditionals are exact
// integer ratios.
class ProbTensor {
 public:
  explicit ProbTensor(CountTensor counts) : counts_(std::move(counts)) {
    if (counts_.total() == 0) throw EmptyDatasetError("normalize: count tensor is empty (total = 0)");
    const auto total = static_cast<double>(counts_.total());
    entries_.reserve(counts_.entries().size());
    for (const auto& [key, n] : counts_.entries()) entries_.push_back({key, static_cast<double>(n) / total});
  }

  [[nodiscard]] const TensorDims& dims() const { return counts_.dims(); }
  [[nodiscard]] const std::vector<ProbEntry>& entries() const { return entries_; }
  [[nodiscard]] const CountTensor& counts() const { return counts_; }

 private:
  CountTensor counts_;
  std::vector<ProbEntry> entries_;
};

inline ProbTensor normalize(const CountTensor& counts) { return ProbTensor(counts); }

// X_i = sum_jk P_ijk over all |X| inputs.
inline std::vector<double> marginal_inputs(const ProbTensor& p) {
  std::vector<std::uint64_t> n(p.dims().inputs, 0);
  for (const auto& [key, c] : p.counts().entries()) n[key.input] += c;
  const auto total = static_cast<double>(p.counts().total());
  std::vector<double> x(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) x[i] = static_cast<double>(n[i]) / total;
  return x;
}

// Marginal and conditional views over a ProbTensor. Every conditional is an
// integer count ratio; conditioning on a zero-probability event yields nullopt.
class Conditionals {
 public:
  explicit Conditionals(const ProbTensor& p) : p_(p), input_counts_(p.dims().inputs, 0) {
    const auto& es = p.counts().entries();
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ik;
    ik.reserve(es.size());
    for (std::size_t e = 0; e < es.size(); ++e) {
      const auto& [key, c] = es[e];
      input_counts_[key.input] += c;
      if (pair_counts_.empty() || pair_counts_.back().first != pair_key(key.input, key.action)) {
        pair_counts_.emplace_back(pair_key(key.input, key.action), 0);
      }
      pair_counts_.back().second += c;
      ik.emplace_back((static_cast<std::uint64_t>(key.input) << 32) | key.successor, c);
    }
    std::sort(ik.begin(), ik.end());
    for (const auto& [k, c] : ik) {
      if (successor_counts_.empty() || successor_counts_.back().first != k) successor_counts_.emplace_back(k, 0);
      successor_counts_.back().second += c;
    }
  }

  [[nodiscard]] double total() const { return static_cast<double>(p_.counts().total()); }

  [[nodiscard]] std::uint64_t input_count(std::uint32_t i) const { return input_counts_.at(i); }
  [[nodiscard]] std::uint64_t input_action_count(std::uint32_t i, std::uint16_t j) const {
    return lookup(pair_counts_, pair_key(i, j));
  }
  [[nodiscard]] std::uint64_t input_successor_count(std::uint32_t i, std::uint32_t k) const {
    return lookup(successor_counts_, (static_cast<std::uint64_t>(i) << 32) | k);
  }

  // Pair marginals p(i, j) and p(i, k).
  [[nodiscard]] double p_input_action(std::uint32_t i, std::uint16_t j) const {
    return static_cast<double>(input_action_count(i, j)) / total();
  }
  [[nodiscard]] double p_input_successor(std::uint32_t i, std::uint32_t k) const {
    return static_cast<double>(input_successor_count(i, k)) / total();
  }

  // p(j | i)
  [[nodiscard]] std::optional<double> action_given_input(std::uint32_t i, std::uint16_t j) const {
    const auto d = input_count(i);
    if (d == 0) return std::nullopt;
    return static_cast<double>(input_action_count(i, j)) / static_cast<double>(d);
  }

  // p(j | i, k)
  [[nodiscard]] std::optional<double> action_given_input_successor(std::uint32_t i, std::uint16_t j,
                                                                   std::uint32_t k) const {
    const auto d = input_successor_count(i, k);
    if (d == 0) return std::nullopt;
    return static_cast<double>(p_.counts().count({i, j, k})) / static_cast<double>(d);
  }

  // p(k | i, j)
  [[nodiscard]] std::optional<double> successor_given_input_action(std::uint32_t i, std::uint16_t j,
                                                                   std::uint32_t k) const {
    const auto d = input_action_count(i, j);
    if (d == 0) return std::nullopt;
    return static_cast<double>(p_.counts().count({i, j, k})) / static_cast<double>(d);
  }

 private:
  static std::uint64_t pair_key(std::uint32_t i, std::uint16_t j) { return (static_cast<std::uint64_t>(i) << 16) | j; }

  static std::uint64_t lookup(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& v, std::uint64_t key) {
    auto it = std::lower_bound(v.begin(), v.end(), key, [](const auto& e, std::uint64_t k) { return e.first < k; });
    return (it != v.end() && it->first == key) ? it->second : 0;
  }

  const ProbTensor& p_;
  std::vector<std::uint64_t> input_counts_;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pair_counts_;       // (i,j) runs, sorted
  std::vector<std::pair<std::uint64_t, std::uint64_t>> successor_counts_;  // (i,k), sorted
};

inline Conditionals conditionals(const ProbTensor& p) { return Conditionals(p); }

}  // namespace objscope
