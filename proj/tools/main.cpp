#include "cli.hpp"

int main(int argc, char** argv) { return mrmbench::cli::run(argc, argv); }
