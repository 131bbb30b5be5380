#include "dexkit_cli.hpp"

int main(int argc, char** argv) {
  dexkit::cli::install_signal_handlers();
  return dexkit::cli::run(argc, argv);
}
