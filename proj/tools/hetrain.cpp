// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "hetrain/cli.hpp"

int main(int argc, char **argv) {
    return hetrain::cli_main(argc, argv, std::cout, std::cerr);
}
