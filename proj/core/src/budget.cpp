#include "qrewrite/budget.hpp"

#include <algorithm>

namespace qrw {

Budget::Budget(double seconds, double money)
    : seconds_(std::max(0.0, seconds)), money_(std::max(0.0, money)) {}

void Budget::debit_time(double seconds) {
  if (seconds <= 0.0) return;
  std::lock_guard<std::mutex> lock(mu_);
  seconds_ = std::max(0.0, seconds_ - seconds);
}

void Budget::debit_money(double amount) {
  if (amount <= 0.0) return;
  std::lock_guard<std::mutex> lock(mu_);
  money_ = std::max(0.0, money_ - amount);
}

void Budget::note_llm_call() {
  std::lock_guard<std::mutex> lock(mu_);
  ++llm_calls_;
}

void Budget::note_db_run() {
  std::lock_guard<std::mutex> lock(mu_);
  ++db_runs_;
}

bool Budget::exhausted() const {
  std::lock_guard<std::mutex> lock(mu_);
  return seconds_ <= 0.0 || money_ <= 0.0;
}

double Budget::seconds_remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return seconds_;
}

double Budget::money_remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return money_;
}

std::uint64_t Budget::llm_calls_made() const {
  std::lock_guard<std::mutex> lock(mu_);
  return llm_calls_;
}

std::uint64_t Budget::db_runs_made() const {
  std::lock_guard<std::mutex> lock(mu_);
  return db_runs_;
}

BudgetScope::BudgetScope(Budget& global, double per_query_seconds)
    : global_(global), local_(per_query_seconds, Budget::kUnlimited) {}

void BudgetScope::debit_time(double seconds) {
  global_.debit_time(seconds);
  local_.debit_time(seconds);
}

void BudgetScope::debit_money(double amount) { global_.debit_money(amount); }

void BudgetScope::note_llm_call() {
  global_.note_llm_call();
  local_.note_llm_call();
}

void BudgetScope::note_db_run() {
  global_.note_db_run();
  local_.note_db_run();
}

bool BudgetScope::exhausted() const {
  return global_.exhausted() || local_.exhausted();
}

}  // namespace qrw
