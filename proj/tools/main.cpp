// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#include "effspec/cli.hpp"

int main(int argc, char** argv) { return effspec::run_cli(argc, argv); }
