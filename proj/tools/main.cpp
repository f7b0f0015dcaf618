#include "ctstab/cli.hpp"

int main(int argc, char** argv) { return ctstab::cli_main(argc, argv); }
