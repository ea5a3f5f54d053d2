#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "lowshot/dataset.hpp"

using namespace lowshot;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.d = 3;
  spec.k_base = 4;
  spec.k_lowshot = 2;
  spec.train_per_base = 5;
  spec.train_per_lowshot = 1;
  spec.test_per_class = 3;
  spec.seed = 7;
  return spec;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("synthetic spec defaults and validation") {
  const SyntheticSpec spec;
  REQUIRE(spec.d == 16);
  REQUIRE(spec.k_base == 40);
  REQUIRE(spec.k_lowshot == 10);
  REQUIRE(spec.train_per_base == 50);
  REQUIRE(spec.train_per_lowshot == 1);
  REQUIRE(spec.test_per_class == 20);
  REQUIRE(spec.mean_scale == 2.0);
  REQUIRE(spec.sigma == 0.5);
  spec.validate();

  SyntheticSpec bad = spec;
  bad.d = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.k_base = 0;
  bad.k_lowshot = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.sigma = -1.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.train_per_lowshot = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.train_per_base = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("generate_synthetic shapes, labels, and splits") {
  const auto spec = small_spec();
  const auto [train, test] = generate_synthetic(spec);

  REQUIRE(train.size() == 4 * 5 + 2 * 1);
  REQUIRE(test.size() == 6 * 3);
  REQUIRE(train.dim() == 3);
  REQUIRE(train.num_classes() == 6);
  REQUIRE(train.split_of_class == test.split_of_class);
  for (std::size_t k = 0; k < 4; ++k) REQUIRE(train.split_of_class[k] == Split::base);
  for (std::size_t k = 4; k < 6; ++k) REQUIRE(train.split_of_class[k] == Split::low_shot);

  // class-by-class layout, every class present in both sets
  std::vector<std::size_t> train_counts(6, 0), test_counts(6, 0);
  for (int y : train.labels) ++train_counts[static_cast<std::size_t>(y)];
  for (int y : test.labels) ++test_counts[static_cast<std::size_t>(y)];
  for (std::size_t k = 0; k < 4; ++k) REQUIRE(train_counts[k] == 5);
  for (std::size_t k = 4; k < 6; ++k) REQUIRE(train_counts[k] == 1);
  for (std::size_t k = 0; k < 6; ++k) REQUIRE(test_counts[k] == 3);

  const ClassSplits splits = class_splits(train);
  REQUIRE(splits.base == std::vector<int>{0, 1, 2, 3});
  REQUIRE(splits.lowshot == std::vector<int>{4, 5});
}

TEST_CASE("generate_synthetic is seed deterministic") {
  const auto spec = small_spec();
  const auto [train1, test1] = generate_synthetic(spec);
  const auto [train2, test2] = generate_synthetic(spec);
  REQUIRE(train1 == train2);
  REQUIRE(test1 == test2);

  auto other = spec;
  other.seed = 8;
  const auto [train3, test3] = generate_synthetic(other);
  REQUIRE(train1 != train3);
}

TEST_CASE("sigma zero collapses every class to its mean") {
  auto spec = small_spec();
  spec.sigma = 0.0;
  const auto [train, test] = generate_synthetic(spec);
  for (std::size_t i = 0; i < train.size(); ++i) {
    // all rows of one class identical, and test rows match train rows
    const auto label = train.labels[i];
    for (std::size_t j = 0; j < test.size(); ++j) {
      if (test.labels[j] != label) continue;
      REQUIRE(train.features.row_vector(i) == test.features.row_vector(j));
    }
    for (double v : train.features.row(i)) {
      REQUIRE(v >= -spec.mean_scale);
      REQUIRE(v <= spec.mean_scale);
    }
  }
}

TEST_CASE("oversample repeats low-shot rows only") {
  const auto [train, test] = generate_synthetic(small_spec());
  (void)test;
  const LabeledSet big = oversample(train, 3);

  REQUIRE(big.size() == train.size() + 2 * 2);  // 2 low-shot rows, 2 extra copies each
  // originals come first in original order
  for (std::size_t i = 0; i < train.size(); ++i) {
    REQUIRE(big.labels[i] == train.labels[i]);
    REQUIRE(big.features.row_vector(i) == train.features.row_vector(i));
  }
  // appended rows are copies of the low-shot rows
  std::vector<std::size_t> counts(6, 0);
  for (int y : big.labels) ++counts[static_cast<std::size_t>(y)];
  REQUIRE(counts[0] == 5);
  REQUIRE(counts[4] == 3);
  REQUIRE(counts[5] == 3);
  for (std::size_t i = train.size(); i < big.size(); ++i) {
    const auto y = static_cast<std::size_t>(big.labels[i]);
    REQUIRE(big.split_of_class[y] == Split::low_shot);
  }

  REQUIRE(oversample(train, 1) == train);
  REQUIRE_THROWS_AS(oversample(train, 0), std::invalid_argument);
}

TEST_CASE("base_subset keeps base rows with remapped labels") {
  const auto [train, test] = generate_synthetic(small_spec());
  (void)test;
  const LabeledSet base = base_subset(train);
  REQUIRE(base.size() == 20);
  REQUIRE(base.num_classes() == 4);
  for (Split s : base.split_of_class) REQUIRE(s == Split::base);
  // labels unchanged here because base classes already occupy 0..3
  for (std::size_t i = 0; i < base.size(); ++i) {
    REQUIRE(base.labels[i] == train.labels[i]);
    REQUIRE(base.features.row_vector(i) == train.features.row_vector(i));
  }
}

TEST_CASE("base_subset remaps non-contiguous base labels") {
  LabeledSet set;
  set.split_of_class = {Split::low_shot, Split::base, Split::low_shot, Split::base};
  set.features = Matrix(4, 1);
  for (std::size_t i = 0; i < 4; ++i) set.features(i, 0) = static_cast<double>(i);
  set.labels = {0, 1, 2, 3};
  const LabeledSet base = base_subset(set);
  REQUIRE(base.size() == 2);
  REQUIRE(base.labels == std::vector<int>{0, 1});  // classes 1 and 3 remapped
  REQUIRE(base.features(0, 0) == 1.0);
  REQUIRE(base.features(1, 0) == 3.0);
}

TEST_CASE("csv round trip is exact") {
  const auto [train, test] = generate_synthetic(small_spec());
  (void)test;
  const auto path = temp_file("lowshot_test_roundtrip.csv");
  save_labeled_csv(train, path);
  const LabeledSet back = load_labeled_csv(path);
  REQUIRE(back == train);

  const std::string content = read_file(path);
  REQUIRE(content.starts_with("label,split,f0,f1,f2\n"));
  std::filesystem::remove(path);
}

TEST_CASE("csv loader rejects malformed files with line numbers") {
  const auto path = temp_file("lowshot_test_bad.csv");
  auto write = [&](const std::string& text) { write_file_atomic(path, text); };
  auto load_error = [&](const std::string& text) -> std::string {
    write(text);
    try {
      load_labeled_csv(path);
    } catch (const parse_error& e) {
      return e.what();
    }
    return "";
  };

  REQUIRE_THAT(load_error(""), Catch::Matchers::ContainsSubstring("no samples"));
  REQUIRE_THAT(load_error("label,split,f0\n"), Catch::Matchers::ContainsSubstring("no samples"));
  REQUIRE_THAT(load_error("wrong,header,f0\n0,base,1\n"),
               Catch::Matchers::ContainsSubstring("header"));
  REQUIRE_THAT(load_error("label,split,f0,fX\n0,base,1,2\n"),
               Catch::Matchers::ContainsSubstring("fX"));
  REQUIRE_THAT(load_error("label,split,f0\n0,base,1,9\n"),
               Catch::Matchers::ContainsSubstring(":2:"));
  REQUIRE_THAT(load_error("label,split,f0\n0,base,1\n1,middle,2\n"),
               Catch::Matchers::ContainsSubstring("middle"));
  REQUIRE_THAT(load_error("label,split,f0\n0,base,nan\n"),
               Catch::Matchers::ContainsSubstring("non-finite"));
  REQUIRE_THAT(load_error("label,split,f0\n0,base,abc\n"),
               Catch::Matchers::ContainsSubstring("invalid number"));
  REQUIRE_THAT(load_error("label,split,f0\n-1,base,1\n"),
               Catch::Matchers::ContainsSubstring("negative label"));
  REQUIRE_THAT(load_error("label,split,f0\n0,base,1\n0,lowshot,2\n"),
               Catch::Matchers::ContainsSubstring("contradicts"));
  REQUIRE_THAT(load_error("label,split,f0\n0,base,1\n2,base,2\n"),
               Catch::Matchers::ContainsSubstring("class 1"));
  std::filesystem::remove(path);
}

TEST_CASE("csv loader accepts crlf and missing trailing newline") {
  const auto path = temp_file("lowshot_test_crlf.csv");
  write_file_atomic(path, "label,split,f0\r\n0,base,1.5\r\n1,lowshot,-2");
  const LabeledSet set = load_labeled_csv(path);
  REQUIRE(set.size() == 2);
  REQUIRE(set.features(0, 0) == 1.5);
  REQUIRE(set.features(1, 0) == -2.0);
  REQUIRE(set.split_of_class[1] == Split::low_shot);
  std::filesystem::remove(path);
}

TEST_CASE("split names") {
  REQUIRE(std::string(split_name(Split::base)) == "base");
  REQUIRE(std::string(split_name(Split::low_shot)) == "lowshot");
}
