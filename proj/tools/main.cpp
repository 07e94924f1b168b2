// SPDX-License-Identifier: Apache-2.0
#include "gradprint/cli.hpp"

int main(int argc, char** argv) { return gradprint::cli::run(argc, argv); }
