// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <string>

namespace effspec {

// Exit codes: 0 success, 1 configuration or input error, 2 solver failure.
int run_cli(int argc, char** argv);

// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& data);

}  // namespace effspec
