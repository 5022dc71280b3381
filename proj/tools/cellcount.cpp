#include "cellcount/cli.hpp"

int main(int argc, char** argv) { return cellcount::cli::main(argc, argv); }
