#include "heterot/cli.hpp"

int main(int argc, char** argv) { return heterot::cli::run(argc, argv); }
