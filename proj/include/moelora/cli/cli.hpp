// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace moelora {

/// Entry point of the moelora tool. Returns 0 iff every requested operation
/// completed; errors are reported on stderr.
int cli_main(int argc, char** argv);

}  // namespace moelora
