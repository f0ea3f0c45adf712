#include "cli.hpp"

int main(int argc, char** argv) {
  kamrev2::cli::RunConfig config;
  int code = 0;
  if (!kamrev2::cli::parse_args(argc, argv, config, code)) return code;
  return kamrev2::cli::run(config);
}
