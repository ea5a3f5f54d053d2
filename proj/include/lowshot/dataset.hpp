#pragma once

// Labeled feature sets with a base / low-shot class partition, a synthetic
// Gaussian-cluster generator, low-shot oversampling, and CSV import/export.
//
// CSV layout: header "label,split,f0,...,f{d-1}", one sample per line,
// split is "base" or "lowshot", features in shortest round-trip decimal.

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lowshot/io.hpp"
#include "lowshot/linalg.hpp"

namespace lowshot {

enum class Split : std::uint8_t { base, low_shot };

inline const char* split_name(Split s) { return s == Split::base ? "base" : "lowshot"; }

struct LabeledSet {
  Matrix features;                    // n x d
  std::vector<int> labels;            // n entries, values in [0, K)
  std::vector<Split> split_of_class;  // K entries

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }
  std::size_t num_classes() const { return split_of_class.size(); }

  bool operator==(const LabeledSet&) const = default;
};

// Class-index sets C_b and C_l; together they partition [0, K).
struct ClassSplits {
  std::vector<int> base;
  std::vector<int> lowshot;
};

inline ClassSplits class_splits(const LabeledSet& set) {
  ClassSplits s;
  for (std::size_t k = 0; k < set.split_of_class.size(); ++k) {
    if (set.split_of_class[k] == Split::base)
      s.base.push_back(static_cast<int>(k));
    else
      s.lowshot.push_back(static_cast<int>(k));
  }
  return s;
}

struct SyntheticSpec {
  std::size_t d = 16;
  std::size_t k_base = 40;
  std::size_t k_lowshot = 10;
  std::size_t train_per_base = 50;
  std::size_t train_per_lowshot = 1;
  std::size_t test_per_class = 20;
  double mean_scale = 2.0;  // class means drawn uniformly in [-mean_scale, mean_scale]^d
  double sigma = 0.5;       // within-class spread
  std::uint64_t seed = 42;

  // Minimum the generator itself needs. Classifier-facing validation
  // (at least two classes) lives in the experiment config.
  void validate() const {
    if (d == 0) throw std::invalid_argument("synthetic spec: d must be >= 1");
    if (k_base + k_lowshot == 0)
      throw std::invalid_argument("synthetic spec: needs at least one class");
    if (k_base > 0 && train_per_base == 0)
      throw std::invalid_argument("synthetic spec: train_per_base must be >= 1");
    if (train_per_lowshot == 0)
      throw std::invalid_argument("synthetic spec: train_per_lowshot must be >= 1");
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("synthetic spec: sigma must be finite and >= 0");
    if (!std::isfinite(mean_scale))
      throw std::invalid_argument("synthetic spec: mean_scale must be finite");
  }
};

// Classes [0, k_base) are base, [k_base, K) low-shot. Draw order is fixed
// (means, then train rows class by class, then test rows), so identical
// specs give bit-identical sets.
inline std::pair<LabeledSet, LabeledSet> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t K = spec.k_base + spec.k_lowshot;
  Rng rng(spec.seed);

  Matrix means(K, spec.d);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < spec.d; ++j)
      means(k, j) = rng.uniform(-spec.mean_scale, spec.mean_scale);

  std::vector<Split> tags(K);
  for (std::size_t k = 0; k < K; ++k)
    tags[k] = k < spec.k_base ? Split::base : Split::low_shot;

  auto fill = [&](std::size_t per_base, std::size_t per_lowshot) {
    LabeledSet set;
    set.split_of_class = tags;
    std::size_t total = spec.k_base * per_base + spec.k_lowshot * per_lowshot;
    set.features = Matrix(total, spec.d);
    set.labels.reserve(total);
    std::size_t row = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t n_k = tags[k] == Split::base ? per_base : per_lowshot;
      Matrix draws = gaussian_sample(rng, means.row_vector(k), spec.sigma, n_k);
      for (std::size_t i = 0; i < n_k; ++i) {
        set.features.set_row(row++, draws.row(i));
        set.labels.push_back(static_cast<int>(k));
      }
    }
    return set;
  };

  LabeledSet train = fill(spec.train_per_base, spec.train_per_lowshot);
  LabeledSet test = fill(spec.test_per_class, spec.test_per_class);
  return {std::move(train), std::move(test)};
}

// Every sample of a low-shot class appears `factor` times; base samples
// once. Originals keep their order, repeats are appended after them.
inline LabeledSet oversample(const LabeledSet& set, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("oversample: factor must be >= 1");
  if (factor == 1) return set;

  std::vector<std::size_t> lowshot_rows;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set.split_of_class[static_cast<std::size_t>(set.labels[i])] == Split::low_shot)
      lowshot_rows.push_back(i);

  LabeledSet out;
  out.split_of_class = set.split_of_class;
  const std::size_t total = set.size() + lowshot_rows.size() * (factor - 1);
  out.features = Matrix(total, set.dim());
  out.labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    out.features.set_row(row++, set.features.row(i));
    out.labels.push_back(set.labels[i]);
  }
  for (std::size_t i : lowshot_rows) {
    for (std::size_t rep = 1; rep < factor; ++rep) {
      out.features.set_row(row++, set.features.row(i));
      out.labels.push_back(set.labels[i]);
    }
  }
  return out;
}

// Rows belonging to base classes only, with labels remapped to a contiguous
// [0, |C_b|) range in class-index order. Used for representation training.
inline LabeledSet base_subset(const LabeledSet& set) {
  std::vector<int> remap(set.num_classes(), -1);
  int next = 0;
  for (std::size_t k = 0; k < set.num_classes(); ++k)
    if (set.split_of_class[k] == Split::base) remap[k] = next++;

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (remap[static_cast<std::size_t>(set.labels[i])] >= 0) rows.push_back(i);

  LabeledSet out;
  out.split_of_class.assign(static_cast<std::size_t>(next), Split::base);
  out.features = Matrix(rows.size(), set.dim());
  out.labels.reserve(rows.size());
  std::size_t row = 0;
  for (std::size_t i : rows) {
    out.features.set_row(row++, set.features.row(i));
    out.labels.push_back(remap[static_cast<std::size_t>(set.labels[i])]);
  }
  return out;
}

inline void save_labeled_csv(const LabeledSet& set, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "label,split";
  for (std::size_t j = 0; j < set.dim(); ++j) out << ",f" << j;
  out << "\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int label = set.labels[i];
    out << label << "," << split_name(set.split_of_class[static_cast<std::size_t>(label)]);
    for (std::size_t j = 0; j < set.dim(); ++j)
      out << "," << format_double(set.features(i, j));
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace detail

inline LabeledSet load_labeled_csv(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<std::string_view> lines;
  {
    std::string_view rest = content;
    while (!rest.empty()) {
      std::size_t pos = rest.find('\n');
      std::string_view line = pos == std::string_view::npos ? rest : rest.substr(0, pos);
      if (line.ends_with('\r')) line.remove_suffix(1);
      lines.push_back(line);
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
  }
  auto fail = [&](std::size_t line_no, const std::string& what) -> void {
    throw parse_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };

  if (lines.empty()) fail(1, "no samples (empty file)");
  const auto header = detail::split_fields(lines[0]);
  if (header.size() < 3 || header[0] != "label" || header[1] != "split")
    fail(1, "expected header 'label,split,f0,...'");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 2] != "f" + std::to_string(j))
      fail(1, "bad feature column name '" + std::string(header[j + 2]) + "'");
  if (lines.size() == 1) fail(1, "no samples");

  const std::size_t n = lines.size() - 1;
  Matrix features(n, d);
  std::vector<int> labels(n);
  std::vector<Split> row_split(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t line_no = i + 2;
    const auto fields = detail::split_fields(lines[i + 1]);
    if (fields.size() != d + 2)
      fail(line_no, "expected " + std::to_string(d + 2) + " fields, got " +
                        std::to_string(fields.size()));
    long label = 0;
    try {
      label = parse_long(fields[0]);
    } catch (const parse_error& e) {
      fail(line_no, e.what());
    }
    if (label < 0) fail(line_no, "negative label");
    labels[i] = static_cast<int>(label);
    max_label = std::max(max_label, labels[i]);
    if (fields[1] == "base")
      row_split[i] = Split::base;
    else if (fields[1] == "lowshot")
      row_split[i] = Split::low_shot;
    else
      fail(line_no, "unknown split tag '" + std::string(fields[1]) + "'");
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      try {
        v = parse_double(fields[j + 2]);
      } catch (const parse_error& e) {
        fail(line_no, e.what());
      }
      if (!std::isfinite(v)) fail(line_no, "non-finite feature value");
      features(i, j) = v;
    }
  }

  const std::size_t K = static_cast<std::size_t>(max_label) + 1;
  std::vector<int> seen_at(K, -1);  // first line that mentioned each class
  std::vector<Split> split_of_class(K, Split::base);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    if (seen_at[k] < 0) {
      seen_at[k] = static_cast<int>(i + 2);
      split_of_class[k] = row_split[i];
    } else if (split_of_class[k] != row_split[i]) {
      fail(i + 2, "split tag for class " + std::to_string(k) +
                      " contradicts line " + std::to_string(seen_at[k]));
    }
  }
  for (std::size_t k = 0; k < K; ++k)
    if (seen_at[k] < 0)
      throw parse_error(path.string() + ": class " + std::to_string(k) + " has no samples");

  LabeledSet set;
  set.features = std::move(features);
  set.labels = std::move(labels);
  set.split_of_class = std::move(split_of_class);
  return set;
}

}  // namespace lowshot
