#pragma once

// Everything: pipeline stages, session engine, drivers and gateway.

#include "gazeforge/attention.hpp"
#include "gazeforge/backend.hpp"
#include "gazeforge/codec.hpp"
#include "gazeforge/compositor.hpp"
#include "gazeforge/config.hpp"
#include "gazeforge/gaze.hpp"
#include "gazeforge/http_backend.hpp"
#include "gazeforge/image.hpp"
#include "gazeforge/live.hpp"
#include "gazeforge/prompts.hpp"
#include "gazeforge/runtime.hpp"
#include "gazeforge/server.hpp"
#include "gazeforge/session.hpp"
#include "gazeforge/session_log.hpp"
