#include "cli.hpp"

int main(int argc, char** argv) { return volfit::cli::run(argc, argv); }
