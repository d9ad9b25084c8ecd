#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "c2far/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    const c2far::cli::CommandConfig cfg = c2far::cli::parse(args);
    return c2far::cli::run(cfg);
  } catch (const c2far::cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nrun `c2far --help` for usage\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
