// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return qreli::cli::run(argc, argv, std::cout, std::cerr); }
