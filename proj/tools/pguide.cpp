#include "pguide/cli.hpp"

int main(int argc, char** argv) { return pguide::cli::run(argc, argv); }
