#include <scraps/cli.hpp>

int main(int argc, char** argv) { return scraps::cli::main(argc, argv); }
