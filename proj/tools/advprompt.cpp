#include "advprompt/cli.hpp"

int main(int argc, char** argv) { return advprompt::cli::run(argc, argv); }
