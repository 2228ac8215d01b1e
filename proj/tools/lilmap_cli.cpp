#include "lilmap/cli.hpp"

int main(int argc, char** argv) { return lilmap::cli::run(argc, argv); }
