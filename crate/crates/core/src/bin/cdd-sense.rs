// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(cdd_sense::cli::run_from(std::env::args_os()));
}
