#include "ipmc/cli.hpp"

int main(int argc, char** argv) { return ipmc::cli::run(argc, argv); }
