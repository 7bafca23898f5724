#pragma once

#include <string>

namespace seqbal {

enum class LogLevel { quiet, warning, info };

void set_log_level(LogLevel level);
LogLevel log_level();

/// Writes "warning: ..." to stderr unless the level is quiet.
void log_warning(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace seqbal
