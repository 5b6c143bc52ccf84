#include "cli.hpp"

int main(int argc, char** argv) { return sok::cli::run(argc, argv); }
