#include "geostream/eval.hpp"

int main(int argc, char** argv) { return geostream::cli_main(argc, argv); }
