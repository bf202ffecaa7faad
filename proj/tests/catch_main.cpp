// Single translation unit for the amalgamated Catch2 distribution; provides
// the framework implementation and the default main for every test binary.
#include <catch2/catch_amalgamated.cpp>
