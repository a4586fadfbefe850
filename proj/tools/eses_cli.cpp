#include "eses/cli.hpp"

int main(int argc, char** argv) { return eses::run(argc, argv); }
