// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/cli/cli.hpp"

int main(int argc, char** argv) { return moelora::cli_main(argc, argv); }
