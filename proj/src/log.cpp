#include "ltf/log.hpp"

#include <cstdlib>
#include <iostream>

namespace ltf {

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("LTF_LOG");
        if (env == nullptr) return 1;
        const std::string v(env);
        if (v == "silent" || v == "0") return 0;
        if (v == "debug" || v == "2") return 2;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[ltf] " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[ltf:debug] " << msg << "\n";
}

}  // namespace ltf
