#include "eventfield/cli.hpp"

int main(int argc, char** argv) { return evf::cli::run(argc, argv); }
