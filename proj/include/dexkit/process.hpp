#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "dexkit/error.hpp"

namespace dexkit {

/// Single-quotes a value for /bin/sh.
inline std::string shell_quote(std::string_view value) {
  std::string out = "'";
  for (char c : value) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

/// Replaces each {name} in a command template with the shell-quoted value.
/// Unknown placeholders are left untouched.
inline std::string expand_command(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const std::string key(tmpl.substr(i + 1, close - i - 1));
        if (auto it = values.find(key); it != values.end()) {
          out += shell_quote(it->second);
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

struct CommandResult {
  int exit_code = 0;
  std::string stderr_text;
};

/// Runs a shell command with stdout discarded and stderr captured.
inline CommandResult run_command(const std::string& command) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  const auto err_path = std::filesystem::temp_directory_path() / ("dexkit-stderr-" + std::to_string(rng()));
  const std::string full = "(" + command + ") >/dev/null 2>" + shell_quote(err_path.string());
  const int status = std::system(full.c_str());

  CommandResult result;
  {
    std::ifstream in(err_path, std::ios::binary);
    result.stderr_text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  std::error_code ec;
  std::filesystem::remove(err_path, ec);
  if (status == -1) throw Error(ErrorCode::Io, "cannot spawn shell for: " + command);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  return result;
}

}  // namespace dexkit
