#pragma once

#include "qdc/io.hpp"
