#pragma once

#include <string>

#include "qrewrite/orchestrator.hpp"

namespace qrw {

// Bump only on breaking changes to the JSON layout; downstream tooling
// keys on this field.
inline constexpr int kReportSchemaVersion = 1;

// Deterministic serializations: sorted keys, no timestamps, stable float
// text. The same RunReport always renders to the same bytes.
std::string render_report_json(const RunReport& report);
std::string render_report_markdown(const RunReport& report);

}  // namespace qrw
