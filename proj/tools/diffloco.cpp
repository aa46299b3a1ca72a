#include "diffloco/cli.hpp"

int main(int argc, char** argv) { return diffloco::cli_main(argc, argv); }
