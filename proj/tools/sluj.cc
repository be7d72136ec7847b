#include <iostream>

#include "sluj/commands.h"

int main(int argc, char** argv) {
  return sluj::run_cli(argc, argv, std::cout, std::cerr);
}
