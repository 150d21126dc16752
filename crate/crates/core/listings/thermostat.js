// logger temp is in the global namespace
jdata {
	double temp as logger(fog);
}
// condition lowtemp is in the global namespace
jcond {
	lowtemp: sys.type == "dev" && temp < 18.5;
}
jasync {lowtemp} function fname() {
  // turns on the heater in the room
}
