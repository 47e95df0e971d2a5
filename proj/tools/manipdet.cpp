#include "cli_app.hpp"

int main(int argc, char** argv) { return manipdet::cli::run(argc, argv); }
