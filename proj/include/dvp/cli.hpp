#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace dvp {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// "key = value" lines with optional [section] headers; '#' starts a comment,
// values may be double-quoted. Keys come back as "section.key" or "key".
std::map<std::string, std::string> parse_config_text(const std::string& text);

using EnvLookup = std::function<const char*(const char*)>;

// args excludes the program name. Option values resolve as
// flag > DVP_<NAME> env > config file ([subcommand] section, then top level)
// > built-in default.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env);

}  // namespace dvp
