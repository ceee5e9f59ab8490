// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aies/config.hpp"

using namespace aies;
namespace fs = std::filesystem;

TEST(Config, Defaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.default_walkers(), 20u);
  EXPECT_EQ(c.inits.size(), 4u);
  ExperimentConfig r;
  r.target = "rosenbrock";
  r.dim = 50;
  EXPECT_EQ(r.default_walkers(), 500u);
}

TEST(Config, ParseFileWithRunsAndComments) {
  std::istringstream is(R"(# desk run
target = ar1
dim = 100   # trailing comment
alpha=0.5
scheduler = serial
probes = 2, 8 ,14

[run]
init_mean = 0
init_sd = 5
[run]
init_mean = -1
init_sd = 10
)");
  ExperimentConfig c;
  parse_config(is, c);
  EXPECT_EQ(c.dim, 100u);
  EXPECT_EQ(c.alpha, 0.5);
  EXPECT_EQ(c.scheduler, Scheduler::SerialSweep);
  EXPECT_EQ(c.probes, (std::vector<std::size_t>{2, 8, 14}));
  ASSERT_EQ(c.inits.size(), 2u);
  EXPECT_EQ(c.inits[1].mean, -1.0);
  EXPECT_EQ(c.inits[1].sd, 10.0);
}

TEST(Config, InitsListSetting) {
  ExperimentConfig c;
  apply_setting(c, "inits", "0:2, 1.5:3");
  ASSERT_EQ(c.inits.size(), 2u);
  EXPECT_EQ(c.inits[1].mean, 1.5);
  EXPECT_EQ(c.inits[1].sd, 3.0);
  EXPECT_THROW(apply_setting(c, "inits", "0-2"), InvalidParameter);
}

TEST(Config, Errors) {
  ExperimentConfig c;
  EXPECT_THROW(apply_setting(c, "nonsense", "1"), InvalidParameter);
  EXPECT_THROW(apply_setting(c, "dim", "ten"), InvalidParameter);
  EXPECT_THROW(apply_setting(c, "dim", "-3"), InvalidParameter);
  EXPECT_THROW(apply_setting(c, "alpha", "0.5x"), InvalidParameter);
  EXPECT_THROW(apply_setting(c, "csv", "maybe"), InvalidParameter);
  EXPECT_THROW(split_assignment("no equals sign"), InvalidParameter);
  std::istringstream bad_section("[walkers]\n");
  EXPECT_THROW(parse_config(bad_section, c), InvalidParameter);
  std::istringstream bad_run_key("[run]\ndim = 3\n");
  EXPECT_THROW(parse_config(bad_run_key, c), InvalidParameter);
  EXPECT_THROW(load_config("/nonexistent/file.cfg"), InvalidParameter);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  EXPECT_NO_THROW(validate_config(c, true));
  c.inits = {{0.0, 1.0}};
  EXPECT_NO_THROW(validate_config(c, false));
  EXPECT_THROW(validate_config(c, true), InvalidParameter);
  c = ExperimentConfig{};
  c.iterations = 15;
  EXPECT_THROW(validate_config(c, true), InvalidParameter);
  c.iterations = 0;
  EXPECT_NO_THROW(validate_config(c, false));
  c = ExperimentConfig{};
  c.a = 0.5;
  EXPECT_THROW(validate_config(c, false), InvalidParameter);
  c = ExperimentConfig{};
  c.hw_coord = 11;
  EXPECT_THROW(validate_config(c, false), InvalidParameter);
  c = ExperimentConfig{};
  c.burn_fraction = 1.0;
  EXPECT_THROW(validate_config(c, false), InvalidParameter);
}

TEST(Config, ScaleFactor) {
  ExperimentConfig c;
  c.dim = 10;
  c.scale = 0.25;
  const EffectiveCounts e = effective_counts(c);
  EXPECT_EQ(e.iterations, 5000u);
  EXPECT_EQ(e.walkers, 6u);  // 20 * 0.25 = 5, rounded up to even for split-half
  EXPECT_EQ(e.steps, 250000u);
  c.scheduler = Scheduler::SerialSweep;
  EXPECT_EQ(effective_counts(c).walkers, 5u);
  c.scale = 0.0;
  EXPECT_THROW(effective_counts(c), InvalidParameter);

  c = ExperimentConfig{};
  c.scale = 0.5;
  const Metadata m = config_metadata(c);
  auto find = [&](const std::string& k) {
    for (const auto& [key, v] : m)
      if (key == k) return v;
    return std::string("?");
  };
  EXPECT_EQ(find("iterations"), "10000");
  EXPECT_EQ(find("walkers"), "10");
  EXPECT_EQ(find("scale"), "0.5");
}

TEST(Config, MetadataExcludesThreads) {
  ExperimentConfig a, b;
  b.threads = 4;
  EXPECT_EQ(config_metadata(a), config_metadata(b));
}

TEST(Targets, Factory) {
  ExperimentConfig c;
  c.dim = 4;
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(make_target("std_gaussian", c).density.log_density(x), StdGaussian{4}.log_density(x));
  const TargetBundle ar = make_target("ar1", c);
  ASSERT_TRUE(ar.ar1);
  EXPECT_EQ(ar.density.log_density(x), ar1_log_density(x, *ar.ar1));
  EXPECT_EQ(make_target("rosenbrock", c).density.log_density(x), rosenbrock_log_density(x));
  EXPECT_THROW(make_target("banana", c), InvalidParameter);
  EXPECT_THROW(make_target("affine(ar1)", c), InvalidParameter);  // needs affine_file
}

TEST(Targets, AffineFromFile) {
  const fs::path dir = fs::temp_directory_path() / "aies_config_tests";
  fs::create_directories(dir);
  const fs::path f = dir / "map.txt";
  {
    std::ofstream os(f);
    os << "# A then b\n2 0\n0 4\n1, -1\n";
  }
  ExperimentConfig c;
  c.dim = 2;
  c.affine_file = f.string();
  const TargetBundle t = make_target("affine(std_gaussian)", c);
  // x = A^{-1}(q - b) = ((3-1)/2, (3+1)/4) = (1, 1)
  EXPECT_DOUBLE_EQ(t.density.log_density(std::vector<double>{3.0, 3.0}), -1.0);

  {
    std::ofstream os(f);
    os << "1 2\n3\n";
  }
  EXPECT_THROW(read_affine_file(f.string(), 2), InvalidParameter);
  {
    std::ofstream os(f);
    os << "1 2\n2 4\n";
  }
  EXPECT_THROW(read_affine_file(f.string(), 2), InvalidParameter);
}
