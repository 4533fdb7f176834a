#pragma once

#include <cstdint>
#include <limits>
#include <mutex>

namespace qrw {

// Saturating allowance of wall-clock seconds and money. Remaining values
// never go below zero and only decrease; exhausted() is true once either
// reaches zero. Safe to share across threads.
class Budget {
 public:
  static constexpr double kUnlimited = std::numeric_limits<double>::infinity();

  Budget(double seconds, double money);

  void debit_time(double seconds);
  void debit_money(double amount);
  void note_llm_call();
  void note_db_run();

  bool exhausted() const;
  double seconds_remaining() const;
  double money_remaining() const;
  std::uint64_t llm_calls_made() const;
  std::uint64_t db_runs_made() const;

  Budget(const Budget&) = delete;
  Budget& operator=(const Budget&) = delete;

 private:
  mutable std::mutex mu_;
  double seconds_;
  double money_;
  std::uint64_t llm_calls_ = 0;
  std::uint64_t db_runs_ = 0;
};

// One query's working allowance: a fresh per-query time budget layered on
// the run-wide budget. Time debits hit both; money is tracked run-wide
// only. Exhaustion of either layer stops work on the query.
class BudgetScope {
 public:
  BudgetScope(Budget& global, double per_query_seconds);

  void debit_time(double seconds);
  void debit_money(double amount);
  void note_llm_call();
  void note_db_run();

  bool exhausted() const;
  Budget& run_budget() { return global_; }
  const Budget& query_budget() const { return local_; }

 private:
  Budget& global_;
  Budget local_;
};

}  // namespace qrw
