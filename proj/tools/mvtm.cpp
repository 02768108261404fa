#include "commands.hpp"

int main(int argc, char** argv) { return mvtm::cli::run(argc, argv); }
