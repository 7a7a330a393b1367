#include "dppsumm/cli.hpp"

int main(int argc, char** argv) { return dppsumm::cli_main(argc, argv); }
