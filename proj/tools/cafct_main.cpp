#include "cafct/cli.hpp"

int main(int argc, char** argv) { return cafct::cli::run(argc, argv); }
