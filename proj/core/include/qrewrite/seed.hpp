#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qrewrite/db.hpp"

namespace qrw {

// Column value generator kinds:
//   serial            1..n, unique
//   int               uniform integer in [min, max]
//   float             uniform real in [min, max)
//   choice            uniform pick from `values`
//   text              prefix + small integer (duplicates on purpose)
// null_rate applies to every kind except serial; duplicate_rate re-emits an
// earlier value of the column, which manufactures duplicate join keys.
struct SeedColumn {
  std::string name;
  std::string kind = "int";
  double min = 0;
  double max = 100;
  std::vector<std::string> values;
  std::string prefix = "v";
  double null_rate = 0.0;
  double duplicate_rate = 0.0;
};

struct SeedTable {
  std::string name;
  std::size_t rows = 0;
  std::vector<SeedColumn> columns;
};

struct SeedSpec {
  std::vector<SeedTable> tables;

  static SeedSpec parse(const std::string& json_text, const std::string& origin);
  static SeedSpec load_file(const std::string& path);
};

// One materialized database instance: the RNG seed that produced it and a
// row-count scale (0 = empty tables, the adversarial empty instance).
struct InstancePlan {
  std::uint64_t seed = 1;
  double row_scale = 1.0;
};

// The default differential-testing trio: two full instances with different
// seeds, one with empty tables.
std::vector<InstancePlan> default_instance_plans();

// Runs the DDL, then inserts rows generated deterministically from the
// seed, then ANALYZE. The same (ddl, spec, seed, scale) always produces
// identical table contents on any engine.
void seed_instance(DbSession& session, const std::string& schema_ddl,
                   const SeedSpec& spec, std::uint64_t seed, double row_scale);

// A materialized sample database plus the seed that produced it, so any
// equivalence witness can name a reproducible instance.
struct SeededInstance {
  DbTarget target;
  std::uint64_t seed = 0;
};

// Creates (or replaces) one database per plan named
// "<base.database>_s<seed>" and seeds it. Returns a target per instance,
// in plan order, with role EquivalenceSample.
std::vector<SeededInstance> build_instances(const DbTarget& base,
                                            const std::string& schema_ddl,
                                            const SeedSpec& spec,
                                            const std::vector<InstancePlan>& plans);

// Splits a DDL script on top-level semicolons (quote-aware) and runs each
// statement, failing loudly on the first error.
void run_script(DbSession& session, const std::string& script);

// SplitMix64: tiny deterministic PRNG for row generation. Identical
// sequences on every platform; no std::random distribution involved.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double next_unit();                                // [0, 1)
  std::int64_t next_range(std::int64_t lo, std::int64_t hi);  // inclusive

 private:
  std::uint64_t state_;
};

}  // namespace qrw
