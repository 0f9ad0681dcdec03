#pragma once

#include <cstddef>
#include <string>

namespace phydeformer {

// Warnings go to stderr prefixed with "[phydeformer] warning:"; a global
// counter and last-message buffer let tests assert that a code path warned
// without scraping the stream.
void log_warning(const std::string& message);

// Emit the warning only the first time this key is seen (per process).
// Used for conditions that would otherwise repeat every iteration.
void log_warning_once(const std::string& key, const std::string& message);

std::size_t warning_count();
std::string last_warning();

}  // namespace phydeformer
