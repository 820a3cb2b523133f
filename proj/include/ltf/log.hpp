#pragma once

#include <string>

namespace ltf {

// Levels: 0 silent, 1 info (default), 2 debug. LTF_LOG=silent|info|debug.
int log_level();
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace ltf
